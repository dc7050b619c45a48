"""Biconnected components over small graphs given as adjacency lists.

Node sets are returned as Python int bitmasks, which keeps the reliable-set
computations on ``n x n`` grids cheap enough to run inside Monte Carlo loops.
"""

from __future__ import annotations

from collections.abc import Sequence


def biconnected_blocks(adj: Sequence[Sequence[int]], alive: int) -> list[int]:
    """Blocks (maximal 2-connected subgraphs or bridges) of the subgraph induced by ``alive``.

    Isolated vertices belong to no block.  Iterative Hopcroft-Tarjan with an
    edge stack so that grids of a few thousand nodes do not hit the recursion
    limit.
    """
    nv = len(adj)
    disc = [0] * nv
    low = [0] * nv
    timer = 1
    blocks: list[int] = []
    for root in range(nv):
        if not (alive >> root) & 1 or disc[root]:
            continue
        disc[root] = low[root] = timer
        timer += 1
        edge_stack: list[tuple[int, int]] = []
        # frame: (vertex, parent, iterator position)
        stack = [[root, -1, 0]]
        while stack:
            frame = stack[-1]
            v, parent, pos = frame
            nbrs = adj[v]
            if pos < len(nbrs):
                frame[2] = pos + 1
                w = nbrs[pos]
                if not (alive >> w) & 1 or w == parent:
                    continue
                if not disc[w]:
                    disc[w] = low[w] = timer
                    timer += 1
                    edge_stack.append((v, w))
                    stack.append([w, v, 0])
                elif disc[w] < disc[v]:
                    edge_stack.append((v, w))
                    if disc[w] < low[v]:
                        low[v] = disc[w]
                continue
            stack.pop()
            if parent < 0:
                continue
            if low[v] < low[parent]:
                low[parent] = low[v]
            if low[v] >= disc[parent]:
                mask = 0
                while True:
                    a, b = edge_stack.pop()
                    mask |= (1 << a) | (1 << b)
                    if a == parent and b == v:
                        break
                blocks.append(mask)
    return blocks


def block_closure(nv: int, blocks: list[int]) -> list[int]:
    """For every vertex, the union of the blocks containing it (itself included)."""
    out = [1 << v for v in range(nv)]
    for mask in blocks:
        m = mask
        while m:
            low = m & -m
            v = low.bit_length() - 1
            out[v] |= mask
            m ^= low
    return out


def iter_bits(mask: int):
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low
