"""Level-1 broadcast protocol slot and its reliable-set analyzer.

The slot has three obligations, bundled in :class:`BaseProtocol`:

* a per-node replica that implements broadcast on an ``n x n`` grid,
* ``rel(corr)``, a reliable node set for a given placement of correct nodes,
* ``is_correct_macro(corr)``, the side-majority predicate used by the
  hierarchy.

The shipped implementation is the *disjoint-path relay* (:class:`RelayProtocol`):

1. The source sends ``(s, m, ())`` to every neighbor and accepts.
2. A node receiving a copy from neighbor ``w`` appends ``w`` to the path unless
   ``w`` is the source, drops copies whose path repeats a node or contains the
   holder or the source, and records the node set of the path.
3. It accepts ``(s, m)`` on a copy received directly from ``s`` or once two
   recorded paths are node-disjoint.
4. Before accepting it forwards at most ``cap`` recorded copies per
   ``(s, m)``.  On acceptance it sends the single relay ``(s, m, ())`` to its
   neighbors and stops forwarding that message.

Step 4's relay makes every accepting node behave like a fresh path origin, so
the analyzer treats nodes that may accept a forgery as forgery origins too.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from collections.abc import Iterable

import numpy as np

from .blocks import biconnected_blocks, block_closure, iter_bits
from .grid import Node, local_adjacency, side_masks

DEFAULT_CAP = 8


class CorrectnessMap:
    """Correct/Byzantine status of every node of a ``side x side`` grid.

    ``status[i, j]`` is True for a correct node.  Instances are immutable and
    hashable so analyzers can memoize on them.
    """

    __slots__ = ("side", "status", "_hash")

    def __init__(self, side: int, status) -> None:
        arr = np.array(status, dtype=bool)
        if arr.shape != (side, side):
            raise ValueError(f"status shape {arr.shape} does not cover a {side}x{side} grid")
        arr.setflags(write=False)
        self.side = side
        self.status = arr
        self._hash = None

    @classmethod
    def all_correct(cls, side: int) -> "CorrectnessMap":
        return cls(side, np.ones((side, side), dtype=bool))

    @classmethod
    def from_byzantine(cls, side: int, byzantine: Iterable[Node]) -> "CorrectnessMap":
        arr = np.ones((side, side), dtype=bool)
        for i, j in byzantine:
            if not (0 <= i < side and 0 <= j < side):
                raise ValueError(f"Byzantine node {(i, j)} outside {side}x{side} grid")
            arr[i, j] = False
        return cls(side, arr)

    @classmethod
    def random(cls, side: int, mu: float, rng: np.random.Generator) -> "CorrectnessMap":
        """Each node correct independently with probability ``mu``."""
        return cls(side, rng.random((side, side)) < mu)

    def is_correct(self, node: Node) -> bool:
        return bool(self.status[node])

    def byzantine(self) -> list[Node]:
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(~self.status))]

    def correct_nodes(self) -> list[Node]:
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(self.status))]

    def num_correct(self) -> int:
        return int(self.status.sum())

    def sub(self, origin: Node, size: int) -> "CorrectnessMap":
        """Restriction to the ``size x size`` block whose top-left node is ``origin``."""
        i, j = origin
        return CorrectnessMap(size, self.status[i : i + size, j : j + size])

    def byzantine_mask(self) -> int:
        """Bitmask over local indices ``i*side + j`` of the Byzantine nodes."""
        flat = np.flatnonzero(~self.status.ravel())
        mask = 0
        for v in flat.tolist():
            mask |= 1 << v
        return mask

    def __eq__(self, other) -> bool:
        if not isinstance(other, CorrectnessMap):
            return NotImplemented
        return self.side == other.side and np.array_equal(self.status, other.status)

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.side, self.status.tobytes()))
        return self._hash

    def __repr__(self) -> str:
        return f"CorrectnessMap(side={self.side}, byzantine={self.byzantine()})"


@dataclass(frozen=True)
class ReliableSet:
    members: frozenset[Node]
    total: int = field(repr=False)

    @property
    def fraction(self) -> float:
        return len(self.members) / self.total if self.total else 0.0

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, node) -> bool:
        return node in self.members


# ---------------------------------------------------------------------------
# replica


class RelayReplica:
    """Per-node state of the disjoint-path relay on an ``n x n`` grid.

    Node identities are local indices ``i*n + j``.  A copy is the tuple
    ``(source, payload, path)``.  Both entry points append outgoing
    ``(neighbor, copy)`` pairs to ``sends`` and accepted ``(source, payload)``
    pairs to ``accepts``.
    """

    __slots__ = ("n", "me", "cap", "_nv", "_nbrs", "_pending", "_done")

    def __init__(self, n: int, me: int, cap: int = DEFAULT_CAP) -> None:
        self.n = n
        self.me = me
        self.cap = cap
        self._nv = n * n
        self._nbrs = local_adjacency(n)[me]
        # key -> [set of recorded path masks, forwarded count, announced-neighbor mask]
        self._pending: dict = {}
        self._done: set = set()

    @property
    def accepted(self) -> set:
        return self._done

    def broadcast(self, payload, sends: list, accepts: list) -> None:
        key = (self.me, payload)
        if key in self._done:
            return
        self._done.add(key)
        self._pending.pop(key, None)
        accepts.append(key)
        copy = (self.me, payload, ())
        for w in self._nbrs:
            sends.append((w, copy))

    def receive(self, frm: int, copy, sends: list, accepts: list) -> None:
        if type(copy) is not tuple or len(copy) != 3:
            return
        src, payload, path = copy
        if type(src) is not int or type(path) is not tuple:
            return
        me = self.me
        nv = self._nv
        if not 0 <= src < nv or src == me:
            return
        key = (src, payload)
        if key in self._done:
            return
        if frm != src:
            path = path + (frm,)
        mask = 0
        for v in path:
            if type(v) is not int or not 0 <= v < nv:
                return
            b = 1 << v
            if mask & b:
                return
            mask |= b
        if mask & ((1 << me) | (1 << src)):
            return

        st = self._pending.get(key)
        if frm != src:
            if st is None:
                st = [set(), 0, 0]
                self._pending[key] = st
            masks = st[0]
            if mask in masks:
                return
            if len(path) == 1:
                st[2] |= 1 << frm
            disjoint = False
            for other in masks:
                if not other & mask:
                    disjoint = True
                    break
            masks.add(mask)
            if not disjoint:
                if st[1] < self.cap:
                    st[1] += 1
                    skip = mask | (1 << src) | st[2]
                    out = (src, payload, path)
                    for w in self._nbrs:
                        if not (skip >> w) & 1:
                            sends.append((w, out))
                return

        known = st[2] if st is not None else 0
        self._pending.pop(key, None)
        self._done.add(key)
        accepts.append(key)
        skip = known | (1 << src)
        relay = (src, payload, ())
        for w in self._nbrs:
            if not (skip >> w) & 1:
                sends.append((w, relay))


# ---------------------------------------------------------------------------
# analyzer


@lru_cache(maxsize=1 << 16)
def _vulnerable_closure(n: int, byz: int) -> int:
    """Nodes that may ever accept a forged message, Byzantine nodes included.

    A correct node ``u`` can be fooled when two distinct forgery origins reach
    it along paths sharing only ``u``.  Origins are the Byzantine nodes and any
    correct node already known to be foolable (it relays its acceptance).  With
    a virtual vertex ``z`` adjacent to every origin, that is exactly "``u``
    shares a biconnected block with ``z``".
    """
    nv = n * n
    adj = local_adjacency(n)
    z = nv
    full = (1 << nv) - 1
    correct = full & ~byz
    bad = byz
    while True:
        origins = list(iter_bits(bad))
        if len(origins) < 2:
            return bad
        graph = [adj[v] + (z,) if (bad >> v) & 1 else adj[v] for v in range(nv)]
        graph.append(tuple(origins))
        reach = 0
        for block in biconnected_blocks(graph, full | (1 << z)):
            if (block >> z) & 1:
                reach |= block
        new = reach & correct & ~bad
        if not new:
            return bad
        bad |= new


@lru_cache(maxsize=1 << 16)
def rel_mask(n: int, byz: int) -> int:
    """Reliable set of the relay protocol as a local-index bitmask."""
    nv = n * n
    full = (1 << nv) - 1
    if byz == 0:
        return full
    correct = full & ~byz
    members = correct & ~_vulnerable_closure(n, byz)
    # Two internally disjoint correct paths (or adjacency) <=> same block of the correct graph.
    compat = block_closure(nv, biconnected_blocks(local_adjacency(n), correct))
    while True:
        worst, worst_conflicts = -1, 0
        for v in iter_bits(members):
            c = (members & ~compat[v]).bit_count()
            if c > worst_conflicts:
                worst, worst_conflicts = v, c
        if worst < 0:
            return members
        members &= ~(1 << worst)


def _mask_to_nodes(n: int, mask: int) -> frozenset[Node]:
    return frozenset((v // n, v % n) for v in iter_bits(mask))


def macro_correct_mask(n: int, members: int) -> bool:
    # strictly more than 3n/4 reliable nodes on every side
    return all(4 * (members & side).bit_count() > 3 * n for side in side_masks(n))


class BaseProtocol:
    """Interface of the level-1 protocol slot."""

    name = "abstract"

    def replica(self, n: int, local: int, cap: int = DEFAULT_CAP):
        raise NotImplementedError

    def rel_mask(self, n: int, byz_mask: int) -> int:
        raise NotImplementedError

    def rel(self, corr: CorrectnessMap) -> ReliableSet:
        n = corr.side
        mask = self.rel_mask(n, corr.byzantine_mask())
        return ReliableSet(_mask_to_nodes(n, mask), n * n)

    def is_correct_macro(self, corr: CorrectnessMap) -> bool:
        n = corr.side
        return macro_correct_mask(n, self.rel_mask(n, corr.byzantine_mask()))


class RelayProtocol(BaseProtocol):
    name = "relay"

    def replica(self, n: int, local: int, cap: int = DEFAULT_CAP) -> RelayReplica:
        return RelayReplica(n, local, cap)

    def rel_mask(self, n: int, byz_mask: int) -> int:
        return rel_mask(n, byz_mask)


PROTOCOLS: dict[str, BaseProtocol] = {"relay": RelayProtocol()}


def get_protocol(name: str | BaseProtocol) -> BaseProtocol:
    if isinstance(name, BaseProtocol):
        return name
    try:
        return PROTOCOLS[name]
    except KeyError:
        raise ValueError(f"unknown base protocol {name!r}; known: {sorted(PROTOCOLS)}") from None


def rel_base(corr: CorrectnessMap, protocol: str | BaseProtocol = "relay") -> ReliableSet:
    return get_protocol(protocol).rel(corr)


def is_correct_macro(corr: CorrectnessMap, protocol: str | BaseProtocol = "relay") -> bool:
    return get_protocol(protocol).is_correct_macro(corr)


def single_byzantine_histogram(n: int = 10, protocol: str | BaseProtocol = "relay") -> dict[int, int]:
    """Reliable-set size -> number of single-Byzantine placements producing it."""
    proto = get_protocol(protocol)
    hist: dict[int, int] = {}
    for v in range(n * n):
        size = proto.rel_mask(n, 1 << v).bit_count()
        hist[size] = hist.get(size, 0) + 1
    return dict(sorted(hist.items(), reverse=True))
