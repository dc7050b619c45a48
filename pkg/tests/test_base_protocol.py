"""Base protocol: the relay replica and the reliable-set analyzer.

The analyzer is checked against networkx: two nodes may talk when they are
adjacent or joined by two internally disjoint correct paths (Menger), and a
node is foolable when two forgery origins reach it along paths meeting only
at that node.
"""

import itertools

import networkx as nx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gridcast.base_protocol import (
    CorrectnessMap,
    RelayReplica,
    get_protocol,
    is_correct_macro,
    macro_correct_mask,
    rel_base,
    rel_mask,
    single_byzantine_histogram,
)
from gridcast.grid import neighbors


def _correct_graph(corr):
    g = nx.Graph()
    side = corr.side
    for u in corr.correct_nodes():
        g.add_node(u)
        for w in neighbors(u, side):
            if corr.is_correct(w):
                g.add_edge(u, w)
    return g


def _can_talk(g, u, v):
    if g.has_edge(u, v):
        return True
    if not nx.has_path(g, u, v):
        return False
    return nx.algorithms.connectivity.local_node_connectivity(g, u, v) >= 2


def _foolable(corr):
    """Fixed point of "two origins reach u by paths meeting only at u"."""
    side = corr.side
    full = nx.grid_2d_graph(side, side)
    bad = set(corr.byzantine())
    while len(bad) >= 2:
        g = full.copy()
        for b in bad:
            g.add_edge("z", b)
        new = set()
        for u in corr.correct_nodes():
            if u in bad:
                continue
            if nx.algorithms.connectivity.local_node_connectivity(g, "z", u) >= 2:
                new.add(u)
        if not new:
            break
        bad |= new
    return bad


placements = st.sets(st.tuples(st.integers(0, 5), st.integers(0, 5)), max_size=7)


@given(placements)
def test_rel_matches_menger_oracle(byz):
    corr = CorrectnessMap.from_byzantine(6, byz)
    rel = rel_base(corr)
    g = _correct_graph(corr)
    foolable = _foolable(corr)
    assert all(corr.is_correct(u) for u in rel.members)
    assert not (rel.members & foolable)
    for u, v in itertools.combinations(sorted(rel.members), 2):
        assert _can_talk(g, u, v), (u, v)


def test_all_correct_is_fully_reliable():
    corr = CorrectnessMap.all_correct(10)
    assert len(rel_base(corr)) == 100
    assert is_correct_macro(corr)


def test_single_byzantine_is_never_foolable():
    # one origin cannot produce two disjoint paths, so only topology matters
    corr = CorrectnessMap.from_byzantine(10, [(4, 4)])
    assert rel_base(corr).members == frozenset(corr.correct_nodes())


def test_two_byzantines_fool_everyone():
    # the grid is 2-connected, so two forgers reach any node along disjoint routes
    for byz in ([(0, 1), (1, 0)], [(0, 0), (9, 9)], [(4, 4), (4, 5)]):
        corr = CorrectnessMap.from_byzantine(10, byz)
        assert len(rel_base(corr)) == 0
        assert not is_correct_macro(corr)


def test_single_byzantine_histograms():
    assert single_byzantine_histogram(10) == {99: 92, 98: 8}
    assert single_byzantine_histogram(4) == {15: 8, 14: 8}


def test_every_single_placement_is_macro_correct():
    for i in range(10):
        for j in range(10):
            assert is_correct_macro(CorrectnessMap.from_byzantine(10, [(i, j)])), (i, j)


def test_macro_correctness_threshold_is_strict():
    n = 4
    full = (1 << 16) - 1
    # drop one node of the top side: 3 of 4 left, 4*3 > 12 fails
    assert not macro_correct_mask(n, full & ~(1 << 1))
    assert macro_correct_mask(n, full)
    n = 10
    full10 = (1 << 100) - 1
    top_two_missing = full10 & ~(0b11 << 3)
    assert macro_correct_mask(n, top_two_missing)  # 8 of 10 > 7.5
    three_missing = full10 & ~(0b111 << 3)
    assert not macro_correct_mask(n, three_missing)  # 7 of 10


def test_protocol_registry():
    proto = get_protocol("relay")
    assert get_protocol(proto) is proto
    with pytest.raises(ValueError):
        get_protocol("nope")
    assert proto.rel_mask(4, 0) == (1 << 16) - 1
    assert rel_mask(4, 0) == (1 << 16) - 1


def test_correctness_map_helpers():
    rng = np.random.default_rng(5)
    assert CorrectnessMap.random(6, 1.0, rng).num_correct() == 36
    assert CorrectnessMap.random(6, 0.0, rng).num_correct() == 0
    corr = CorrectnessMap.from_byzantine(8, [(5, 6)])
    assert corr.sub((4, 4), 4).byzantine() == [(1, 2)]
    assert corr == CorrectnessMap.from_byzantine(8, [(5, 6)])
    assert hash(corr) == hash(CorrectnessMap.from_byzantine(8, [(5, 6)]))
    with pytest.raises(ValueError):
        CorrectnessMap.from_byzantine(8, [(8, 0)])
    with pytest.raises(ValueError):
        corr.status[0, 0] = False


@pytest.mark.parametrize("seed", range(4))
def test_one_more_byzantine_never_enlarges_rel(seed):
    rng = np.random.default_rng(seed)
    for _ in range(200):
        status = rng.random((10, 10)) < 0.93
        before = len(rel_base(CorrectnessMap(10, status)))
        cand = np.argwhere(status)
        if not len(cand):
            continue
        i, j = cand[rng.integers(len(cand))]
        status[i, j] = False
        assert len(rel_base(CorrectnessMap(10, status))) <= before


# ---------------------------------------------------------------------------
# replica acceptance rule (4x4 grid, local ids i*4+j)


def _rx(rep, frm, copy):
    sends, accepts = [], []
    rep.receive(frm, copy, sends, accepts)
    return sends, accepts


def test_direct_copy_from_source_is_accepted():
    rep = RelayReplica(4, 5)
    sends, accepts = _rx(rep, 4, (4, b"m", ()))
    assert accepts == [(4, b"m")]
    # relay to every neighbor except the source
    assert sorted(w for w, _ in sends) == [1, 6, 9]
    assert all(c == (4, b"m", ()) for _, c in sends)


def test_two_disjoint_paths_needed():
    rep = RelayReplica(4, 10)  # (2, 2); source 0 at (0, 0)
    s1, a1 = _rx(rep, 6, (0, b"m", (1, 2)))   # path 1,2,6
    assert a1 == [] and s1
    s2, a2 = _rx(rep, 9, (0, b"m", (1, 5)))   # path 1,5,9 shares node 1
    assert a2 == []
    s3, a3 = _rx(rep, 9, (0, b"m", (4, 8)))   # path 4,8,9 disjoint from 1,2,6
    assert a3 == [(0, b"m")]


def test_bad_paths_are_dropped():
    rep = RelayReplica(4, 10)
    assert _rx(rep, 6, (0, b"m", (10,))) == ([], [])      # contains the holder
    assert _rx(rep, 6, (0, b"m", (0, 2))) == ([], [])     # contains the source
    assert _rx(rep, 6, (0, b"m", (2, 2))) == ([], [])     # repeated node
    assert _rx(rep, 6, (0, b"m", (99,))) == ([], [])      # not a node
    assert _rx(rep, 6, "garbage") == ([], [])
    assert _rx(rep, 6, (10, b"m", ())) == ([], [])        # claims to be from me


def test_forward_cap():
    rep = RelayReplica(4, 15, cap=2)  # corner (3, 3): neighbors 11, 14
    forwarded = 0
    for path in [(1, 2, 3, 7), (1, 2, 6, 7), (1, 5, 6, 7)]:
        sends, _ = _rx(rep, 11, (0, b"m", path))
        forwarded += bool(sends)
    assert forwarded == 2


def test_relay_marks_sender_as_done():
    rep = RelayReplica(4, 10)
    sends, accepts = _rx(rep, 6, (0, b"m", ()))  # 6 accepted and relays
    assert accepts == []
    assert all(w != 6 for w, _ in sends)
    _, accepts = _rx(rep, 9, (0, b"m", (4, 8)))
    assert accepts == [(0, b"m")]


def test_broadcast_accepts_locally():
    rep = RelayReplica(4, 0)
    sends, accepts = [], []
    rep.broadcast(b"x", sends, accepts)
    assert accepts == [(0, b"x")]
    assert sorted(w for w, _ in sends) == [1, 4]
    rep.broadcast(b"x", sends, accepts)
    assert len(accepts) == 1


@pytest.mark.parametrize("seed", range(2))
def test_one_more_byzantine_never_enlarges_rel_4x4(seed):
    rng = np.random.default_rng(50 + seed)
    for _ in range(300):
        status = rng.random((4, 4)) < 0.9
        before = len(rel_base(CorrectnessMap(4, status)))
        cand = np.argwhere(status)
        if not len(cand):
            continue
        i, j = cand[rng.integers(len(cand))]
        status[i, j] = False
        assert len(rel_base(CorrectnessMap(4, status))) <= before


# brute-force acceptance predicate on a 4x4 grid: feed arbitrary copies and
# compare with "a direct copy from the source, or two valid recorded paths
# that are disjoint as node sets"

copies = st.lists(
    st.tuples(st.integers(0, 15), st.lists(st.integers(0, 15), max_size=4).map(tuple)),
    max_size=12,
)


@given(st.integers(0, 15), st.integers(0, 15), copies)
def test_acceptance_matches_brute_force(me, src, feed):
    if me == src:
        return
    from gridcast.grid import local_adjacency

    nbrs = local_adjacency(4)[me]
    rep = RelayReplica(4, me)
    recorded = []
    expect = False
    got = False
    for frm_pick, path in feed:
        frm = nbrs[frm_pick % len(nbrs)]
        sends, accepts = [], []
        rep.receive(frm, (src, b"m", path), sends, accepts)
        got = got or bool(accepts)
        if expect:
            continue
        full = path if frm == src else path + (frm,)
        if len(set(full)) != len(full) or me in full or src in full:
            continue
        if frm == src:
            expect = True
            continue
        s = set(full)
        if any(not (s & r) for r in recorded):
            expect = True
        recorded.append(s)
    assert got == expect


def test_single_forger_never_fools_anyone():
    """100 placements x 100 schedules: with one Byzantine node no correct node accepts a forgery."""
    from gridcast.adversary import AdversaryStrategy
    from gridcast.grid import GridSpec
    from gridcast.sim import Schedule, run

    spec = GridSpec(10, 1)
    fooled = 0
    for b in range(100):
        corr = CorrectnessMap.from_byzantine(10, [(b // 10, b % 10)])
        targets = corr.correct_nodes()
        for s in range(100):
            kind = "spoof-source" if s % 2 else "vote-forgery"
            adv = AdversaryStrategy(kind, fake_source=targets[(7 * s + b) % len(targets)], seed=s)
            tr = run(spec, corr, adv, Schedule("random", s), record=False)
            fooled += sum(1 for acc in tr.accepted.values() if acc)
    assert fooled == 0
