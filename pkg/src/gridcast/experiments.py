"""Worst-case placement search and Monte Carlo estimation.

Monte Carlo trials derive their generator from ``(seed, trial_index)``, so the
result depends only on the master seed and trial count, never on how trials
are spread over worker processes.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .base_protocol import CorrectnessMap, get_protocol, macro_correct_mask, single_byzantine_histogram
from .bounds import alpha_from_counts
from .grid import GridSpec, Node
from .reliable import rel_k_array

MAX_MC_LEVEL = 3
PLACEMENT_MODES = ("exhaustive", "clustered", "spread", "random")


@dataclass
class MCResult:
    estimate: float
    stderr: float
    trials: int
    requested: int
    seed: int
    partial: bool = False
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "stderr": self.stderr,
            "trials": self.trials,
            "requested": self.requested,
            "seed": self.seed,
            "partial": self.partial,
            **self.params,
        }


def _trial_rng(seed: int, t: int) -> np.random.Generator:
    return np.random.default_rng([seed, t])


def _p_trial(mu0: float, n: int, protocol: str, seed: int, t: int) -> float:
    rng = _trial_rng(seed, t)
    status = rng.random((n, n)) < mu0
    u = int(rng.integers(n * n))
    byz = 0
    for v in np.flatnonzero(~status.ravel()).tolist():
        byz |= 1 << v
    mask = get_protocol(protocol).rel_mask(n, byz)
    return 1.0 if macro_correct_mask(n, mask) and (mask >> u) & 1 else 0.0


def _f_trial(mu: float, n: int, k: int, protocol: str, seed: int, t: int) -> float:
    spec = GridSpec(n, k)
    rng = _trial_rng(seed, t)
    status = rng.random((spec.side(), spec.side())) < mu
    arr = rel_k_array(spec, CorrectnessMap(spec.side(), status), protocol)
    return float(arr.sum()) / spec.num_nodes()


def _chunk(fn, args: tuple, lo: int, hi: int) -> list:
    return [fn(*args, t) for t in range(lo, hi)]


def _collect(fn, args: tuple, trials: int, workers: int, max_seconds: float | None) -> list:
    if workers <= 1:
        out = []
        deadline = None if max_seconds is None else time.monotonic() + max_seconds
        for t in range(trials):
            if deadline is not None and time.monotonic() > deadline:
                break
            out.append(fn(*args, t))
        return out
    size = max(1, math.ceil(trials / (4 * workers)))
    bounds = [(lo, min(trials, lo + size)) for lo in range(0, trials, size)]
    out: list = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_chunk, fn, args, lo, hi) for lo, hi in bounds]
        for fut in futures:
            out.extend(fut.result())
    return out


def _summarize(values: list, requested: int, seed: int, params: dict) -> MCResult:
    t = len(values)
    if t == 0:
        return MCResult(float("nan"), float("nan"), 0, requested, seed, True, params)
    arr = np.asarray(values, dtype=float)
    mean = float(arr.sum() / t)
    stderr = float(arr.std(ddof=1) / math.sqrt(t)) if t > 1 else 0.0
    return MCResult(mean, stderr, t, requested, seed, t < requested, params)


def monte_carlo_P(mu0: float, n: int, trials: int, seed: int, *, protocol: str = "relay",
                  workers: int = 1, max_seconds: float | None = None) -> MCResult:
    """Frequency of "the grid is a correct macro-node and a random node is reliable"."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not 0.0 <= mu0 <= 1.0:
        raise ValueError("mu0 must lie in [0, 1]")
    values = _collect(_p_trial, (mu0, n, protocol, seed), trials, workers, max_seconds)
    return _summarize(values, trials, seed, {"quantity": "P", "mu": mu0, "n": n, "k": 1})


def monte_carlo_F(mu: float, spec: GridSpec, trials: int, seed: int, *, protocol: str = "relay",
                  workers: int = 1, max_seconds: float | None = None) -> MCResult:
    """Mean reliable fraction of ``G_k`` under i.i.d. correctness with probability ``mu``.

    When ``max_seconds`` runs out (sequential mode only) the estimate covers
    the trials completed so far and is flagged ``partial``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if spec.k > MAX_MC_LEVEL:
        raise ValueError(f"monte_carlo_F supports k <= {MAX_MC_LEVEL}, got k={spec.k}")
    if not 0.0 <= mu <= 1.0:
        raise ValueError("mu must lie in [0, 1]")
    values = _collect(_f_trial, (mu, spec.n, spec.k, protocol, seed), trials, workers, max_seconds)
    return _summarize(values, trials, seed, {"quantity": "F", "mu": mu, "n": spec.n, "k": spec.k})


def reference_alpha(n: int = 10, protocol: str = "relay") -> Fraction:
    """``alpha`` recomputed from the exhaustive single-Byzantine enumeration."""
    hist = single_byzantine_histogram(n, protocol)
    return alpha_from_counts([(count, size) for size, count in sorted(hist.items())], n * n)


# ---------------------------------------------------------------------------
# worst-case placements


@dataclass
class WorstCaseResult:
    n: int
    k: int
    mode: str
    budget: int
    seed: int | None
    tested: int = 0
    min_reliable: int | None = None
    argmin: list = field(default_factory=list)
    all_macro_correct: bool | None = None
    rows: list = field(default_factory=list)

    @property
    def total(self) -> int:
        return (self.n**self.k) ** 2

    @property
    def min_fraction(self) -> Fraction | None:
        if self.min_reliable is None:
            return None
        return Fraction(self.min_reliable, self.total)

    @property
    def passed(self) -> bool:
        """``min_fraction >= 1 - 4/n^2``, compared in integers."""
        if self.min_reliable is None:
            return False
        nn = self.n * self.n
        ok = self.min_reliable * nn >= self.total * (nn - 4)
        return ok and self.all_macro_correct is not False

    def to_dict(self) -> dict:
        mf = self.min_fraction
        return {
            "n": self.n,
            "k": self.k,
            "mode": self.mode,
            "budget": self.budget,
            "seed": self.seed,
            "tested": self.tested,
            "min_reliable": self.min_reliable,
            "min_fraction": None if mf is None else float(mf),
            "bound": 1 - 4 / (self.n * self.n),
            "argmin": [list(b) for b in self.argmin],
            "all_macro_correct": self.all_macro_correct,
            "passed": self.passed,
        }


def _random_cells(rng: np.random.Generator, origin: Node, size: int, count: int) -> list:
    cells = rng.choice(size * size, size=count, replace=False)
    return [(origin[0] + int(c) // size, origin[1] + int(c) % size) for c in cells]


def clustered_placement(spec: GridSpec, budget: int, rng: np.random.Generator) -> list:
    """Byzantines paired inside level-1 clusters, the clusters packed into one macro-node.

    With two Byzantines per cluster each cluster can lose its correctness, and
    packing those clusters side by side concentrates the damage one level up.
    """
    n, k = spec.n, spec.k
    if k == 1:
        return _random_cells(rng, (0, 0), n, budget)
    groups = [2] * (budget // 2) + ([1] if budget % 2 else [])
    macro_side = n ** (k - 1)
    # host block: n x n clusters forming one level-2 macro-node (the whole grid when k == 2)
    span = min(n, macro_side)
    if len(groups) > span * span:
        raise ValueError(f"clustered placement fits at most {2 * span * span} Byzantines")
    bi, bj = (int(x) for x in rng.integers(macro_side // span, size=2))
    slots = np.sort(rng.choice(span * span, size=len(groups), replace=False))
    out = []
    for g_size, slot in zip(groups, slots.tolist()):
        ci, cj = bi * span + slot // span, bj * span + slot % span
        out.extend(_random_cells(rng, (ci * n, cj * n), n, g_size))
    return out


def spread_placement(spec: GridSpec, budget: int, rng: np.random.Generator) -> list:
    """Every Byzantine in a different level-1 cluster."""
    n = spec.n
    if spec.k == 1:
        return _random_cells(rng, (0, 0), n, budget)
    macro_side = n ** (spec.k - 1)
    clusters = rng.choice(macro_side * macro_side, size=budget, replace=False)
    out = []
    for c in clusters.tolist():
        out.extend(_random_cells(rng, ((c // macro_side) * n, (c % macro_side) * n), n, 1))
    return out


def random_placement(spec: GridSpec, budget: int, rng: np.random.Generator) -> list:
    return _random_cells(rng, (0, 0), spec.side(), budget)


def worst_case_experiment(spec: GridSpec, mode: str = "exhaustive", *, budget: int | None = None,
                          count: int = 1000, seed: int | None = None, protocol: str = "relay",
                          keep_rows: bool = True) -> WorstCaseResult:
    """Minimum ``rel_k`` fraction over placements of ``budget`` Byzantine nodes.

    ``budget`` defaults to ``2**(k-1)``.  ``exhaustive`` needs a single
    Byzantine on ``G_1`` and also checks that every placement leaves the grid
    a correct macro-node; the other modes draw ``count`` seeded placements.
    """
    if mode not in PLACEMENT_MODES:
        raise ValueError(f"unknown placement mode {mode!r}; known: {PLACEMENT_MODES}")
    if budget is None:
        budget = 2 ** (spec.k - 1)
    if budget < 0 or budget > spec.num_nodes():
        raise ValueError("budget must lie in [0, number of nodes]")
    res = WorstCaseResult(spec.n, spec.k, mode, budget, seed)
    side = spec.side()

    if mode == "exhaustive":
        if spec.k != 1 or budget != 1:
            raise ValueError("exhaustive mode covers one Byzantine node on G_1 only")
        placements = [[(i, j)] for i in range(side) for j in range(side)]
    else:
        if seed is None:
            raise ValueError(f"{mode} placements need a seed")
        rng = np.random.default_rng(seed)
        draw = {"clustered": clustered_placement, "spread": spread_placement, "random": random_placement}[mode]
        placements = [draw(spec, budget, rng) for _ in range(count)]

    macro_ok_all = True
    for byz in placements:
        corr = CorrectnessMap.from_byzantine(side, byz)
        arr = rel_k_array(spec, corr, protocol)
        reliable = int(arr.sum())
        row = {"byzantine": [list(b) for b in byz], "reliable": reliable,
               "fraction": reliable / spec.num_nodes()}
        if spec.k == 1:
            mask = 0
            for v in np.flatnonzero(arr.ravel()).tolist():
                mask |= 1 << v
            row["macro_correct"] = macro_correct_mask(spec.n, mask)
            macro_ok_all &= row["macro_correct"]
        res.tested += 1
        if res.min_reliable is None or reliable < res.min_reliable:
            res.min_reliable = reliable
            res.argmin = [tuple(b) for b in byz]
        if keep_rows:
            res.rows.append(row)
    if spec.k == 1:
        res.all_macro_correct = macro_ok_all
    return res
