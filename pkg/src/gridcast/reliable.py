"""Omniscient reliable-set analysis over the whole hierarchy.

``rel_k`` follows the recursive construction: the reliable set of ``G_{k+1}``
is the union of the cluster-level reliable sets of those clusters whose
macro-node is reliable in the virtual ``G_k`` where every non-correct
macro-node plays a Byzantine node.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

import numpy as np

from .adversary import SILENT, SPOOF_SOURCE, VOTE_FORGERY, AdversaryStrategy
from .base_protocol import (
    DEFAULT_CAP,
    BaseProtocol,
    CorrectnessMap,
    ReliableSet,
    get_protocol,
    macro_correct_mask,
)
from .blocks import iter_bits
from .grid import GridSpec, Node
from .sim import DEFAULT_BUDGET, Schedule, run


@dataclass
class LevelAnalysis:
    """One recursion step: the macro-grid side and which macro-nodes are correct."""

    side: int
    macro_correct: np.ndarray  # bool (side/n, side/n); Corr' of this step
    cluster_rel: dict  # macro coord -> local bitmask of its cluster reliable set


def _analyze(n: int, status: np.ndarray, proto: BaseProtocol, levels: list) -> np.ndarray:
    """Boolean membership array of ``Rel`` for the grid ``status`` (side n**j)."""
    side = status.shape[0]
    if side == n:
        mask = proto.rel_mask(n, _byz_mask(status))
        return _mask_to_array(n, mask)
    m = side // n
    macro_ok = np.zeros((m, m), dtype=bool)
    cluster_rel = {}
    for a in range(m):
        for b in range(m):
            block = status[a * n : (a + 1) * n, b * n : (b + 1) * n]
            mask = proto.rel_mask(n, _byz_mask(block))
            cluster_rel[(a, b)] = mask
            macro_ok[a, b] = macro_correct_mask(n, mask)
    levels.append(LevelAnalysis(side, macro_ok, cluster_rel))
    macro_rel = _analyze(n, macro_ok, proto, levels)
    out = np.zeros((side, side), dtype=bool)
    for a, b in zip(*np.nonzero(macro_rel)):
        out[a * n : (a + 1) * n, b * n : (b + 1) * n] = _mask_to_array(n, cluster_rel[(int(a), int(b))])
    return out


def _byz_mask(block: np.ndarray) -> int:
    if block.all():
        return 0
    mask = 0
    for v in np.flatnonzero(~block.ravel()).tolist():
        mask |= 1 << v
    return mask


_ARRAY_CACHE: dict = {}


def _mask_to_array(n: int, mask: int) -> np.ndarray:
    key = (n, mask)
    arr = _ARRAY_CACHE.get(key)
    if arr is None:
        arr = np.zeros(n * n, dtype=bool)
        arr[list(iter_bits(mask))] = True
        arr = arr.reshape(n, n)
        arr.setflags(write=False)
        if len(_ARRAY_CACHE) < 1 << 16:
            _ARRAY_CACHE[key] = arr
    return arr


def rel_k_array(spec: GridSpec, corr: CorrectnessMap, protocol="relay") -> np.ndarray:
    if corr.side != spec.side():
        raise ValueError(f"correctness map side {corr.side} != grid side {spec.side()}")
    return _analyze(spec.n, corr.status, get_protocol(protocol), [])


def rel_k(spec: GridSpec, corr: CorrectnessMap, protocol="relay") -> ReliableSet:
    """Reliable node set of the composed protocol on ``G_k``."""
    arr = rel_k_array(spec, corr, protocol)
    members = frozenset((int(i), int(j)) for i, j in zip(*np.nonzero(arr)))
    return ReliableSet(members, spec.num_nodes())


def rel_fraction(spec: GridSpec, corr: CorrectnessMap, protocol="relay") -> float:
    return float(rel_k_array(spec, corr, protocol).sum()) / spec.num_nodes()


def macro_correctness(spec: GridSpec, corr: CorrectnessMap, protocol="relay") -> list[LevelAnalysis]:
    """Per-level ``Corr'`` maps, finest level first."""
    levels: list = []
    _analyze(spec.n, corr.status, get_protocol(protocol), levels)
    return levels


def fraction_report(spec: GridSpec, corr: CorrectnessMap, protocol="relay") -> dict:
    levels: list = []
    arr = _analyze(spec.n, corr.status, get_protocol(protocol), levels)
    total = spec.num_nodes()
    return {
        "n": spec.n,
        "k": spec.k,
        "nodes": total,
        "byzantine": total - corr.num_correct(),
        "reliable": int(arr.sum()),
        "fraction": float(arr.sum()) / total,
        "levels": [
            {
                "level": idx + 1,
                "grid_side": lv.side,
                "macro_nodes": int(lv.macro_correct.size),
                "correct_macro_nodes": int(lv.macro_correct.sum()),
                "incorrect": [[int(a), int(b)] for a, b in zip(*np.nonzero(~lv.macro_correct))],
            }
            for idx, lv in enumerate(levels)
        ],
    }


# ---------------------------------------------------------------------------
# empirical validation


@dataclass
class VerifyReport:
    pairs_checked: int = 0
    runs: int = 0
    liveness_failures: int = 0
    safety_violations: int = 0
    truncated_runs: int = 0
    counterexamples: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.liveness_failures or self.safety_violations or self.truncated_runs)

    def merge(self, other: "VerifyReport") -> None:
        self.pairs_checked += other.pairs_checked
        self.runs += other.runs
        self.liveness_failures += other.liveness_failures
        self.safety_violations += other.safety_violations
        self.truncated_runs += other.truncated_runs
        self.counterexamples.extend(other.counterexamples)

    def to_dict(self) -> dict:
        return {
            "pairs_checked": self.pairs_checked,
            "runs": self.runs,
            "liveness_failures": self.liveness_failures,
            "safety_violations": self.safety_violations,
            "truncated_runs": self.truncated_runs,
            "ok": self.ok,
            "counterexamples": self.counterexamples,
        }


def verify_reliable(
    spec: GridSpec,
    corr: CorrectnessMap,
    rel: ReliableSet | None = None,
    trials: int = 1,
    *,
    adversaries=(SILENT, SPOOF_SOURCE, VOTE_FORGERY),
    seed: int = 0,
    max_sources: int | None = None,
    policy: str = "random",
    cap: int = DEFAULT_CAP,
    protocol="relay",
    budget: int = DEFAULT_BUDGET,
) -> VerifyReport:
    """Run the protocol against Byzantine strategies and check the reliable set.

    Every run broadcasts one distinct payload from each sampled source of
    ``rel``.  Liveness: every member accepts every sampled broadcast.  Safety:
    no member accepts a pair that was not broadcast.  Sources default to all
    members for grids up to ``10**4`` nodes; ``max_sources`` caps them.
    """
    if rel is None:
        rel = rel_k(spec, corr, protocol)
    members = sorted(rel.members)
    report = VerifyReport()
    if not members:
        return report
    limit = max_sources
    if limit is None and spec.num_nodes() > 10**4:
        limit = 1000
    rng = random.Random(seed)
    for kind in adversaries:
        for t in range(trials):
            sources = members if limit is None or limit >= len(members) else sorted(rng.sample(members, limit))
            fake = rng.choice(members)
            broadcasts = [(s, b"m:%d,%d" % s) for s in sources]
            strategy = AdversaryStrategy(kind, fake_source=fake, seed=rng.getrandbits(32))
            schedule = Schedule(policy, rng.getrandbits(63))
            trace = run(spec, corr, strategy, schedule, broadcasts, cap=cap, protocol=protocol,
                        budget=budget, record=False)
            report.runs += 1
            if trace.truncated:
                report.truncated_runs += 1
            genuine = set(broadcasts)
            for r in members:
                acc = trace.accepted[r]
                for s, m in broadcasts:
                    report.pairs_checked += 1
                    if (s, m) not in acc:
                        report.liveness_failures += 1
                        if len(report.counterexamples) < 20:
                            report.counterexamples.append(
                                {"kind": "liveness", "adversary": kind, "seed": schedule.seed,
                                 "source": list(s), "receiver": list(r),
                                 "byzantine": [list(b) for b in corr.byzantine()]}
                            )
                for s, m in acc:
                    if s in rel.members and (s, m) not in genuine:
                        report.safety_violations += 1
                        if len(report.counterexamples) < 20:
                            report.counterexamples.append(
                                {"kind": "safety", "adversary": kind, "seed": schedule.seed,
                                 "source": list(s), "receiver": list(r),
                                 "payload": repr(m),
                                 "byzantine": [list(b) for b in corr.byzantine()]}
                            )
    return report
