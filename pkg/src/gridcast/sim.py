"""Deterministic asynchronous discrete-event simulator.

The network state is a multiset of pending envelopes.  A :class:`Schedule`
decides which pending envelope is delivered next; every envelope is delivered
eventually because runs are finite.  There are no clocks: ``tick`` counts
deliveries.
"""

from __future__ import annotations

import heapq
import json
import random
from collections import deque
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

from .adversary import AdversaryStrategy
from .base_protocol import DEFAULT_CAP, CorrectnessMap
from .fractal import make_replica
from .grid import GridSpec, Node, neighbor_list

DEFAULT_BUDGET = 10**8

FIFO = "fifo"
RANDOM = "random"
ADVERSARIAL = "adversarial"
POLICIES = (FIFO, RANDOM, ADVERSARIAL)
DELAY_RULES = ("byzantine-first", "lifo")


@dataclass(frozen=True)
class Envelope:
    sender: Node
    receiver: Node
    payload: object
    enqueue_tick: int
    cause: int = -1  # index of the delivery that emitted it, -1 for start events


@dataclass(frozen=True)
class Schedule:
    """Delivery-order policy.

    ``fifo`` delivers in enqueue order; ``random`` picks a uniformly random
    pending envelope; ``adversarial`` uses a priority ``rule``:
    ``byzantine-first`` delivers every Byzantine-sent envelope before any
    correct one, ``lifo`` always delivers the newest envelope.
    """

    policy: str = FIFO
    seed: int = 0
    rule: str = "byzantine-first"

    def __post_init__(self) -> None:
        if self.policy not in POLICIES:
            raise ValueError(f"unknown schedule policy {self.policy!r}; known: {POLICIES}")
        if self.rule not in DELAY_RULES:
            raise ValueError(f"unknown delay rule {self.rule!r}; known: {DELAY_RULES}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def make_queue(self, byzantine: set):
        if self.policy == FIFO:
            return _FifoQueue()
        if self.policy == RANDOM:
            return _RandomQueue(self.seed)
        return _PriorityQueue(self.rule, byzantine)


class _FifoQueue:
    def __init__(self) -> None:
        self._q: deque = deque()

    def push(self, item) -> None:
        self._q.append(item)

    def pop(self):
        return self._q.popleft()

    def __len__(self) -> int:
        return len(self._q)


class _RandomQueue:
    def __init__(self, seed: int) -> None:
        self._items: list = []
        self._rng = random.Random(seed)

    def push(self, item) -> None:
        self._items.append(item)

    def pop(self):
        items = self._items
        i = self._rng.randrange(len(items))
        items[i], items[-1] = items[-1], items[i]
        return items.pop()

    def __len__(self) -> int:
        return len(self._items)


class _PriorityQueue:
    def __init__(self, rule: str, byzantine: set) -> None:
        self._heap: list = []
        self._seq = 0
        self._rule = rule
        self._byz = byzantine

    def push(self, item) -> None:
        self._seq += 1
        if self._rule == "lifo":
            prio = -self._seq
        else:
            prio = 0 if item[0] in self._byz else 1
        heapq.heappush(self._heap, (prio, self._seq, item))

    def pop(self):
        return heapq.heappop(self._heap)[2]

    def __len__(self) -> int:
        return len(self._heap)


@dataclass
class Trace:
    """Outcome of one run.

    ``deliveries`` is only populated when the run was recorded; each entry is
    an :class:`Envelope` in delivery order.  ``accepted`` maps every correct
    node to the set of ``(source, payload)`` pairs it accepted.
    """

    spec: GridSpec
    corr: CorrectnessMap
    broadcasts: list
    schedule: Schedule
    adversary: AdversaryStrategy
    cap: int
    protocol: str
    deliveries: list = field(default_factory=list)
    acceptances: list = field(default_factory=list)  # (tick, node, source, payload)
    accepted: dict = field(default_factory=dict)
    delivered: int = 0
    sent: int = 0
    dropped: int = 0
    truncated: bool = False
    recorded: bool = False

    def final_accepted(self) -> dict:
        return {v: frozenset(s) for v, s in self.accepted.items()}

    def accepted_count(self, source: Node, payload) -> int:
        return sum(1 for s in self.accepted.values() if (source, payload) in s)

    def to_records(self) -> list[dict]:
        """Line-delimited export, one dict per record; the schema is listed in the README."""
        recs: list[dict] = [
            {
                "type": "run",
                "n": self.spec.n,
                "k": self.spec.k,
                "protocol": self.protocol,
                "cap": self.cap,
                "policy": self.schedule.policy,
                "seed": self.schedule.seed,
                "rule": self.schedule.rule,
                "adversary": self.adversary.to_dict(),
                "byzantine": [list(b) for b in self.corr.byzantine()],
                "broadcasts": [[list(s), encode(m)] for s, m in self.broadcasts],
            }
        ]
        for t, env in enumerate(self.deliveries):
            recs.append(
                {
                    "type": "deliver",
                    "tick": t,
                    "sender": list(env.sender),
                    "receiver": list(env.receiver),
                    "enqueue_tick": env.enqueue_tick,
                    "cause": env.cause,
                    "msg": encode(env.payload),
                }
            )
        for tick, node, src, payload in self.acceptances:
            recs.append(
                {
                    "type": "accept",
                    "tick": tick,
                    "node": list(node),
                    "source": list(src),
                    "payload": encode(payload),
                }
            )
        for node in sorted(self.accepted):
            recs.append(
                {
                    "type": "final",
                    "node": list(node),
                    "accepted": sorted(
                        ([list(s), encode(p)] for s, p in self.accepted[node]),
                        key=lambda x: json.dumps(x),
                    ),
                }
            )
        recs.append(
            {
                "type": "summary",
                "delivered": self.delivered,
                "sent": self.sent,
                "dropped": self.dropped,
                "truncated": self.truncated,
            }
        )
        return recs

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, separators=(",", ":")) + "\n" for r in self.to_records())


def encode(obj):
    """JSON-friendly form of a message: tuples become lists, bytes become ``{"hex": ...}``."""
    if isinstance(obj, bytes):
        return {"hex": obj.hex()}
    if isinstance(obj, (tuple, list)):
        return [encode(x) for x in obj]
    return obj


class SimContext:
    """Read-only view handed to adversary strategies (they are omniscient)."""

    def __init__(self, spec, corr, broadcasts, replicas, byzantine) -> None:
        self.spec = spec
        self.side = spec.side()
        self.corr = corr
        self.broadcasts = broadcasts
        self.replicas = replicas
        self.byzantine = byzantine

    def default_fake_source(self) -> Node:
        return min(self.replicas)


class Simulation:
    """One run, steppable.  Most callers want :func:`run`."""

    def __init__(
        self,
        spec: GridSpec,
        corr: CorrectnessMap,
        adversary: AdversaryStrategy | None = None,
        schedule: Schedule | None = None,
        broadcasts: Sequence[tuple[Node, object]] = (),
        *,
        cap: int = DEFAULT_CAP,
        protocol: str = "relay",
        budget: int = DEFAULT_BUDGET,
        record: bool = True,
    ) -> None:
        side = spec.side()
        if corr.side != side:
            raise ValueError(f"correctness map side {corr.side} != grid side {side}")
        adversary = adversary or AdversaryStrategy()
        schedule = schedule or Schedule()
        broadcasts = [(tuple(s), m) for s, m in broadcasts]
        for s, _ in broadcasts:
            if not spec.contains(s) or not corr.is_correct(s):
                raise ValueError(f"broadcast source {s} must be a correct node of the grid")
        self.spec = spec
        self.side = side
        self.budget = budget
        self.record = record
        self.byzantine = set(corr.byzantine())
        self.replicas = {
            (i, j): make_replica(spec.k, spec.n, (i, j), protocol, cap)
            for i in range(side)
            for j in range(side)
            if corr.status[i, j]
        }
        self.trace = Trace(spec, corr, broadcasts, schedule, adversary, cap, protocol)
        self.trace.recorded = record
        self.trace.accepted = {v: set() for v in self.replicas}
        self.queue = schedule.make_queue(self.byzantine)
        self.ctx = SimContext(spec, corr, broadcasts, self.replicas, sorted(self.byzantine))
        self.adv = adversary.build(self.ctx)
        self.tick = 0
        self._sends: list = []
        self._accepts: list = []
        self._started = False

    # ------------------------------------------------------------------

    def _enqueue_from(self, sender: Node, cause: int) -> None:
        tick = self.tick
        push = self.queue.push
        n_sent = 0
        for receiver, msg in self._sends:
            push((sender, receiver, msg, tick, cause))
            n_sent += 1
        self.trace.sent += n_sent
        self._sends.clear()

    def _record_accepts(self, node: Node) -> None:
        acc = self.trace.accepted[node]
        for src, payload in self._accepts:
            key = (src, payload)
            if key not in acc:
                acc.add(key)
                self.trace.acceptances.append((self.tick, node, src, payload))
        self._accepts.clear()

    def _inject_byzantine(self, events: Iterable, cause: int) -> None:
        side = self.side
        for b, w, msg in events:
            if b not in self.byzantine or w not in neighbor_list(b, side):
                self.trace.dropped += 1
                continue
            self.queue.push((b, w, msg, self.tick, cause))
            self.trace.sent += 1

    def start(self) -> None:
        if self._started:
            return
        self._started = True
        for s, m in self.trace.broadcasts:
            self.replicas[s].broadcast(m, self._sends, self._accepts)
            self._record_accepts(s)
            self._enqueue_from(s, -1)
        self._inject_byzantine(self.adv.start(), -1)

    def quiescent(self) -> bool:
        return quiescent(self)

    def step(self) -> bool:
        """Deliver one envelope; False once quiescent."""
        self.start()
        if not len(self.queue):
            due = self.adv.due(self.tick, idle=True)
            if not due:
                return False
            self._inject_byzantine(due, -1)
        sender, receiver, msg, enq, cause = self.queue.pop()
        t = self.tick
        if self.record:
            self.trace.deliveries.append(Envelope(sender, receiver, msg, enq, cause))
        rep = self.replicas.get(receiver)
        if rep is None:
            self._inject_byzantine(self.adv.on_receive(receiver, sender, msg), t)
        elif sender in self.byzantine:
            try:
                rep.receive(sender, msg, self._sends, self._accepts)
            except (TypeError, ValueError, IndexError, KeyError):
                # unhashable or malformed Byzantine garbage
                self._sends.clear()
                self._accepts.clear()
                self.trace.dropped += 1
        else:
            rep.receive(sender, msg, self._sends, self._accepts)
        self.tick = t + 1
        if self._accepts:
            self._record_accepts(receiver)
        if self._sends:
            self._enqueue_from(receiver, t)
        if not self.adv.exhausted():
            self._inject_byzantine(self.adv.due(self.tick, idle=False), -1)
        return True

    def run(self) -> Trace:
        self.start()
        # inlined fast path of step() for the common case
        queue = self.queue
        replicas = self.replicas
        byz = self.byzantine
        adv = self.adv
        trace = self.trace
        record = self.record
        deliveries = trace.deliveries
        sends, accepts = self._sends, self._accepts
        budget = self.budget
        while True:
            if not len(queue):
                if adv.exhausted():
                    break
                self._inject_byzantine(adv.due(self.tick, idle=True), -1)
                continue
            if self.tick >= budget:
                trace.truncated = True
                break
            sender, receiver, msg, enq, cause = queue.pop()
            t = self.tick
            if record:
                deliveries.append(Envelope(sender, receiver, msg, enq, cause))
            rep = replicas.get(receiver)
            if rep is None:
                self._inject_byzantine(adv.on_receive(receiver, sender, msg), t)
            elif sender in byz:
                try:
                    rep.receive(sender, msg, sends, accepts)
                except (TypeError, ValueError, IndexError, KeyError):
                    sends.clear()
                    accepts.clear()
                    trace.dropped += 1
            else:
                rep.receive(sender, msg, sends, accepts)
            self.tick = t + 1
            if accepts:
                self._record_accepts(receiver)
            if sends:
                n_sent = len(sends)
                push = queue.push
                for r, m in sends:
                    push((receiver, r, m, t + 1, t))
                trace.sent += n_sent
                sends.clear()
            if not adv.exhausted():
                self._inject_byzantine(adv.due(self.tick, idle=False), -1)
        trace.delivered = self.tick
        return trace


def quiescent(sim: Simulation) -> bool:
    """True iff nothing is pending and the adversary has no scripted events left."""
    return not len(sim.queue) and sim.adv.exhausted()


def run(
    spec: GridSpec,
    corr: CorrectnessMap,
    adversary: AdversaryStrategy | None = None,
    schedule: Schedule | None = None,
    broadcasts: Sequence[tuple[Node, object]] = (),
    **kwargs,
) -> Trace:
    """Run to quiescence (or the event budget) and return the trace."""
    return Simulation(spec, corr, adversary, schedule, broadcasts, **kwargs).run()


def random_causal_order(trace: Trace, rng: random.Random) -> list[int]:
    """A uniformly-built random delivery order that respects causality."""
    children: dict[int, list[int]] = {}
    ready: list[int] = []
    for idx, env in enumerate(trace.deliveries):
        if env.cause < 0:
            ready.append(idx)
        else:
            children.setdefault(env.cause, []).append(idx)
    order = []
    while ready:
        i = rng.randrange(len(ready))
        ready[i], ready[-1] = ready[-1], ready[i]
        idx = ready.pop()
        order.append(idx)
        ready.extend(children.get(idx, ()))
    return order


def replay(trace: Trace, permutation: Sequence[int]) -> dict:
    """Feed every recorded delivery to fresh replicas in ``permutation`` order.

    Replica outputs are discarded: each node sees exactly the messages it saw
    in the original run, only in another order.  Returns the final accepted
    sets of the correct nodes.
    """
    if not trace.recorded:
        raise ValueError("trace was not recorded; rerun with record=True")
    deliveries = trace.deliveries
    nd = len(deliveries)
    if sorted(permutation) != list(range(nd)):
        raise ValueError("permutation must be a permutation of the recorded deliveries")
    pos = [0] * nd
    for p, idx in enumerate(permutation):
        pos[idx] = p
    for idx, env in enumerate(deliveries):
        if env.cause >= 0 and pos[env.cause] > pos[idx]:
            raise ValueError(
                f"permutation delivers envelope {idx} before the delivery {env.cause} that caused it"
            )
    spec, corr = trace.spec, trace.corr
    replicas = {
        v: make_replica(spec.k, spec.n, v, trace.protocol, trace.cap)
        for v in trace.accepted
    }
    accepted = {v: set() for v in replicas}
    sends: list = []
    accepts: list = []
    byz = set(corr.byzantine())
    for s, m in trace.broadcasts:
        replicas[s].broadcast(m, sends, accepts)
        accepted[s].update(accepts)
        sends.clear()
        accepts.clear()
    for idx in permutation:
        env = deliveries[idx]
        rep = replicas.get(env.receiver)
        if rep is None:
            continue
        try:
            rep.receive(env.sender, env.payload, sends, accepts)
        except (TypeError, ValueError, IndexError, KeyError):
            if env.sender not in byz:
                raise
        accepted[env.receiver].update(accepts)
        sends.clear()
        accepts.clear()
    return {v: frozenset(s) for v, s in accepted.items()}
