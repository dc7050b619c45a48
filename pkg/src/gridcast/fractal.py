"""Hierarchical broadcast protocol: macro-channels and recursive composition.

A replica for layer ``j`` runs on a node of ``G_j`` (side ``n**j``).  Layer 1
is the base protocol over one ``n x n`` grid.  A layer ``j >= 2`` replica
carries

* a base-protocol replica over its own ``n x n`` cluster,
* the simulated layer ``j-1`` replica of its macro-node ``p``, and
* macro-channel state: per direction the ``Sen`` entries already transmitted,
  the vote tallies and the ``Rec`` sets.

Messages on a layer-``j`` link are ``("B", copy)`` inside a cluster and
``("X", inner_message)`` across a cluster boundary.  Base payloads are
``("app", m)`` for a broadcast originating in the cluster and
``("vote", d, inner_message)`` for a border vote about a message received from
the macro-neighbor in direction ``d``.

Every entry point appends outgoing ``(neighbor_coord, message)`` pairs to
``sends`` and accepted ``(source_coord, payload)`` pairs to ``accepts``.
"""

from __future__ import annotations

from .base_protocol import DEFAULT_CAP, BaseProtocol, get_protocol
from .grid import DIRECTIONS, Node, side_masks


class BaseLayerReplica:
    """Layer-1 replica: the base protocol over a whole ``n x n`` grid, in coordinates."""

    __slots__ = ("n", "coord", "core", "_acc", "_snd")

    def __init__(self, n: int, coord: Node, protocol: BaseProtocol, cap: int) -> None:
        self.n = n
        self.coord = coord
        self.core = protocol.replica(n, coord[0] * n + coord[1], cap)
        self._snd: list = []
        self._acc: list = []

    def _flush(self, sends: list, accepts: list) -> None:
        n = self.n
        for w, copy in self._snd:
            sends.append(((w // n, w % n), copy))
        for src, payload in self._acc:
            accepts.append(((src // n, src % n), payload))
        self._snd.clear()
        self._acc.clear()

    def broadcast(self, payload, sends: list, accepts: list) -> None:
        self.core.broadcast(payload, self._snd, self._acc)
        self._flush(sends, accepts)

    def receive(self, frm: Node, msg, sends: list, accepts: list) -> None:
        n = self.n
        self.core.receive(frm[0] * n + frm[1], msg, self._snd, self._acc)
        self._flush(sends, accepts)


class CompositeReplica:
    """Layer ``j >= 2`` replica of one node of ``G_j``."""

    def __init__(self, layer: int, n: int, coord: Node, protocol: BaseProtocol, cap: int) -> None:
        self.layer = layer
        self.n = n
        self.coord = coord
        i, j = coord
        self.cluster: Node = (i // n, j // n)
        self.origin: Node = (self.cluster[0] * n, self.cluster[1] * n)
        self.local = (i % n) * n + (j % n)
        self.base = protocol.replica(n, self.local, cap)
        self.inner = make_replica(layer - 1, n, self.cluster, protocol, cap)
        macro_side = n ** (layer - 1)
        self._side_masks = side_masks(n)

        # direction -> macro-neighbor coordinate, for neighbors inside the macro-grid
        self.macro_nbr: dict[int, Node] = {}
        self._dir_of_macro: dict[Node, int] = {}
        # direction -> physical neighbor across the border (only when this node borders d)
        self.cross: dict[int, Node] = {}
        for d, (di, dj) in enumerate(DIRECTIONS):
            a, b = self.cluster[0] + di, self.cluster[1] + dj
            if 0 <= a < macro_side and 0 <= b < macro_side:
                self.macro_nbr[d] = (a, b)
                self._dir_of_macro[(a, b)] = d
                if (self._side_masks[d] >> self.local) & 1:
                    self.cross[d] = (i + di, j + dj)
        self._dir_of_cross = {v: d for d, v in self.cross.items()}

        self.sen: dict[int, set] = {d: set() for d in self.cross}
        self.rec: dict[int, set] = {d: set() for d in self.macro_nbr}
        self.tally: dict[tuple, int] = {}
        self.voted: set = set()
        self.injected: set = set()

        self._bs: list = []
        self._ba: list = []
        self._is: list = []
        self._ia: list = []

    # -- coordinate helpers -------------------------------------------------

    def _global(self, local: int) -> Node:
        n = self.n
        return (self.origin[0] + local // n, self.origin[1] + local % n)

    def _local_of(self, node: Node) -> int | None:
        a, b = node[0] - self.origin[0], node[1] - self.origin[1]
        n = self.n
        if 0 <= a < n and 0 <= b < n:
            return a * n + b
        return None

    # -- entry points -------------------------------------------------------

    def broadcast(self, payload, sends: list, accepts: list) -> None:
        self.base.broadcast(("app", payload), self._bs, self._ba)
        self._drain(sends, accepts)

    def receive(self, frm: Node, msg, sends: list, accepts: list) -> None:
        if type(msg) is not tuple or len(msg) != 2:
            return
        tag, body = msg
        local = self._local_of(frm)
        if local is not None:
            if tag != "B":
                return
            self.base.receive(local, body, self._bs, self._ba)
        else:
            d = self._dir_of_cross.get(frm)
            if d is None or tag != "X":
                return
            self.macro_receive_vote(d, body)
        self._drain(sends, accepts)

    # -- macro-channel ------------------------------------------------------

    def macro_send(self, d: int, message, sends: list) -> None:
        """Transmit ``message`` to the cross-border neighbor facing ``d``, once."""
        sen = self.sen.get(d)
        if sen is None or message in sen:
            return
        sen.add(message)
        sends.append((self.cross[d], ("X", message)))

    def macro_receive_vote(self, d: int, message) -> None:
        """Vote for ``message`` received from the macro-neighbor in direction ``d``."""
        key = (d, message)
        if key in self.voted:
            return
        self.voted.add(key)
        self.base.broadcast(("vote", d, message), self._bs, self._ba)

    def macro_accept(self, voter: int, d: int, message) -> bool:
        """Count an accepted vote; True when ``message`` newly enters ``Rec`` for ``d``."""
        if d not in self.rec or not (self._side_masks[d] >> voter) & 1:
            return False
        key = (d, message)
        tally = self.tally.get(key, 0) | (1 << voter)
        self.tally[key] = tally
        rec = self.rec[d]
        if 2 * tally.bit_count() > self.n and message not in rec:
            rec.add(message)
            return True
        return False

    # -- event plumbing -----------------------------------------------------

    def _drain(self, sends: list, accepts: list) -> None:
        bs, ba, is_, ia = self._bs, self._ba, self._is, self._ia
        while bs or ba or is_ or ia:
            if bs:
                for w, copy in bs:
                    sends.append((self._global(w), ("B", copy)))
                bs.clear()
            if ba:
                batch = ba[:]
                ba.clear()
                for src, payload in batch:
                    self._on_base_accept(src, payload)
            if is_:
                batch = is_[:]
                is_.clear()
                for to, message in batch:
                    d = self._dir_of_macro.get(to)
                    if d is not None:
                        self.macro_send(d, message, sends)
            if ia:
                batch = ia[:]
                ia.clear()
                for p, payload in batch:
                    self._on_inner_accept(p, payload, accepts)

    def _on_base_accept(self, src: int, payload) -> None:
        if type(payload) is not tuple or not payload:
            return
        tag = payload[0]
        if tag == "app" and len(payload) == 2:
            item = (self._global(src), payload[1])
            if item not in self.injected:
                self.injected.add(item)
                self.inner.broadcast(item, self._is, self._ia)
        elif tag == "vote" and len(payload) == 3:
            _, d, message = payload
            if self.macro_accept(src, d, message):
                self.simulate_macro_step(d, message)

    def simulate_macro_step(self, d: int, message) -> None:
        """Feed a ``Rec`` insertion to the simulated macro-node as a reception."""
        self.inner.receive(self.macro_nbr[d], message, self._is, self._ia)

    def _on_inner_accept(self, p: Node, payload, accepts: list) -> None:
        if type(payload) is not tuple or len(payload) != 2:
            return
        s, m = payload
        if type(s) is not tuple or len(s) != 2:
            return
        n = self.n
        if (s[0] // n, s[1] // n) != p:
            return
        accepts.append((s, m))


def make_replica(layer: int, n: int, coord: Node, protocol: BaseProtocol | str = "relay",
                 cap: int = DEFAULT_CAP):
    """Replica running the layer-``layer`` composed protocol at ``coord`` of ``G_layer``."""
    protocol = get_protocol(protocol)
    if layer == 1:
        return BaseLayerReplica(n, coord, protocol, cap)
    return CompositeReplica(layer, n, coord, protocol, cap)
