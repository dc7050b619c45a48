import networkx as nx
from hypothesis import given
from hypothesis import strategies as st

from gridcast.blocks import biconnected_blocks, block_closure, iter_bits
from gridcast.grid import local_adjacency


def _nx_blocks(adj, alive):
    g = nx.Graph()
    for v, nbrs in enumerate(adj):
        if (alive >> v) & 1:
            for w in nbrs:
                if (alive >> w) & 1:
                    g.add_edge(v, w)
    return sorted(sum(1 << v for v in comp) for comp in nx.biconnected_components(g))


@given(st.integers(min_value=0, max_value=(1 << 36) - 1))
def test_grid_blocks_match_networkx(alive):
    adj = local_adjacency(6)
    assert sorted(biconnected_blocks(adj, alive)) == _nx_blocks(adj, alive)


@given(st.lists(st.tuples(st.integers(0, 11), st.integers(0, 11)), max_size=30))
def test_arbitrary_graph_blocks_match_networkx(edges):
    nv = 12
    nbrs = [set() for _ in range(nv)]
    for a, b in edges:
        if a != b:
            nbrs[a].add(b)
            nbrs[b].add(a)
    adj = [sorted(s) for s in nbrs]
    alive = (1 << nv) - 1
    assert sorted(biconnected_blocks(adj, alive)) == _nx_blocks(adj, alive)


def test_path_graph_has_bridge_blocks():
    adj = [[1], [0, 2], [1]]
    assert sorted(biconnected_blocks(adj, 0b111)) == [0b011, 0b110]


def test_block_closure_and_bits():
    closure = block_closure(3, [0b011, 0b110])
    assert closure == [0b011, 0b111, 0b110]
    assert list(iter_bits(0b10110)) == [1, 2, 4]
