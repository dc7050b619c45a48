"""Byzantine behaviour strategies.

Strategies are omniscient (they see the whole :class:`~gridcast.sim.SimContext`)
but may only emit messages on their own physical channels; the engine drops
anything addressed to a non-neighbor.  Each emission is a
``(byzantine_node, neighbor, message)`` triple.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .grid import DIRECTIONS, Node, neighbor_list

SILENT = "silent"
SPOOF_SOURCE = "spoof-source"
VOTE_FORGERY = "vote-forgery"
RANDOM_NOISE = "random-noise"
SCRIPTED = "scripted"
KINDS = (SILENT, SPOOF_SOURCE, VOTE_FORGERY, RANDOM_NOISE, SCRIPTED)

DEFAULT_FORGED_PAYLOAD = b"forged"


@dataclass
class AdversaryStrategy:
    """Behaviour shared by every Byzantine node of a run.

    ``fake_source`` is the node being impersonated by ``spoof-source`` and
    ``vote-forgery``; when None the engine picks the lexicographically smallest
    correct node.  ``script`` holds ``(at_tick, byzantine, neighbor, message)``
    events for ``scripted``; an event fires once ``at_tick`` deliveries have
    happened, or earlier if the network would otherwise go quiet.
    """

    kind: str = SILENT
    fake_source: Node | None = None
    forged_payload: bytes = DEFAULT_FORGED_PAYLOAD
    seed: int = 0
    noise_messages: int = 4
    script: list = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown adversary kind {self.kind!r}; known: {KINDS}")
        if self.fake_source is not None:
            self.fake_source = tuple(self.fake_source)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "fake_source": list(self.fake_source) if self.fake_source else None,
            "forged_payload": self.forged_payload.hex(),
            "seed": self.seed,
            "noise_messages": self.noise_messages,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AdversaryStrategy":
        return cls(
            kind=d.get("kind", SILENT),
            fake_source=tuple(d["fake_source"]) if d.get("fake_source") else None,
            forged_payload=bytes.fromhex(d.get("forged_payload", DEFAULT_FORGED_PAYLOAD.hex())),
            seed=int(d.get("seed", 0)),
            noise_messages=int(d.get("noise_messages", 4)),
        )

    def build(self, ctx) -> "ActiveAdversary":
        return ActiveAdversary(self, ctx)


class ActiveAdversary:
    """Run-time instance of a strategy bound to one simulation."""

    def __init__(self, strategy: AdversaryStrategy, ctx) -> None:
        self.strategy = strategy
        self.ctx = ctx
        self._script = sorted(
            ((int(t), tuple(b), tuple(w), msg) for t, b, w, msg in strategy.script),
            key=lambda e: e[0],
        )
        self._rng = random.Random(strategy.seed)

    def exhausted(self) -> bool:
        return not self._script

    def due(self, tick: int, idle: bool) -> list:
        """Scripted events to inject now; when ``idle`` the next event is forced."""
        out = []
        while self._script and (self._script[0][0] <= tick or (idle and not out)):
            _, b, w, msg = self._script.pop(0)
            out.append((b, w, msg))
        return out

    def start(self) -> list:
        kind = self.strategy.kind
        ctx = self.ctx
        out: list = []
        if kind in (SILENT, SCRIPTED) or not ctx.byzantine:
            return out
        target = self.strategy.fake_source or ctx.default_fake_source()
        m = self.strategy.forged_payload
        for b in ctx.byzantine:
            for w in neighbor_list(b, ctx.side):
                if kind == SPOOF_SOURCE:
                    msgs = forge_claim(ctx.spec.k, ctx.spec.n, b, w, target, m)
                elif kind == VOTE_FORGERY:
                    msgs = forge_votes(ctx.spec.k, ctx.spec.n, b, w, target, m)
                else:
                    msgs = [self._noise(ctx) for _ in range(self.strategy.noise_messages)]
                out.extend((b, w, msg) for msg in msgs)
        return out

    def on_receive(self, b: Node, frm: Node, msg) -> list:
        return []

    def _noise(self, ctx):
        rng = self._rng
        nn = ctx.spec.n * ctx.spec.n
        path = tuple(rng.randrange(nn) for _ in range(rng.randrange(4)))
        copy = (rng.randrange(nn), bytes(rng.getrandbits(8) for _ in range(3)), path)
        if ctx.spec.k == 1:
            return copy
        if rng.random() < 0.5:
            return ("B", copy)
        return ("X", copy)


def _layer_coord(node: Node, n: int, drop: int) -> Node:
    size = n**drop
    return (node[0] // size, node[1] // size)


def forge_claim(k: int, n: int, b: Node, w: Node, claim_src: Node, m) -> list:
    """Messages that ``b`` sends ``w`` to push the claim "``claim_src`` broadcast ``m``".

    At each layer the forgery is a fresh base-protocol copy with an empty
    claimed path; on a cluster boundary it is wrapped as a macro-channel
    message carrying the forgery one layer down.
    """
    if k == 1:
        return [(claim_src[0] * n + claim_src[1], m, ())]
    cb, cw, cs = _layer_coord(b, n, 1), _layer_coord(w, n, 1), _layer_coord(claim_src, n, 1)
    if cb == cw:
        if cs != cb:
            return []
        local = (claim_src[0] % n) * n + claim_src[1] % n
        return [("B", (local, ("app", m), ()))]
    inner = forge_claim(k - 1, n, cb, cw, cs, (claim_src, m))
    return [("X", x) for x in inner]


def forge_votes(k: int, n: int, b: Node, w: Node, claim_src: Node, m) -> list:
    """Forged border votes, sent by ``b`` inside its own cluster.

    ``b`` votes in its own name and also impersonates every other border node
    of its cluster, for each direction, claiming the macro-neighbor relayed the
    layer-below forgery of "``claim_src`` broadcast ``m``".
    """
    if k == 1:
        return forge_claim(k, n, b, w, claim_src, m)
    cb, cw = _layer_coord(b, n, 1), _layer_coord(w, n, 1)
    if cb != cw:
        return forge_claim(k, n, b, w, claim_src, m)
    macro_side = n ** (k - 1)
    cs = _layer_coord(claim_src, n, 1)
    out = []
    last = n - 1
    for d, (di, dj) in enumerate(DIRECTIONS):
        p = (cb[0] + di, cb[1] + dj)
        if not (0 <= p[0] < macro_side and 0 <= p[1] < macro_side):
            continue
        inner = forge_claim(k - 1, n, p, cb, cs, (claim_src, m))
        if not inner:
            continue
        if d == 0:
            voters = [t for t in range(n)]
        elif d == 1:
            voters = [last * n + t for t in range(n)]
        elif d == 2:
            voters = [t * n for t in range(n)]
        else:
            voters = [t * n + last for t in range(n)]
        for x in inner:
            for v in voters:
                out.append(("B", (v, ("vote", d, x), ())))
    return out
