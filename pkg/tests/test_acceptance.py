"""Acceptance suite: one PASS/FAIL line per criterion, printed in the terminal summary.

Criterion 8 lists the items that are reported but deliberately not gated.
"""

import time
from fractions import Fraction

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from gridcast.adversary import SILENT, SPOOF_SOURCE, VOTE_FORGERY, AdversaryStrategy
from gridcast.base_protocol import CorrectnessMap, single_byzantine_histogram
from gridcast.bounds import (
    BETA,
    PUBLISHED_ALPHA,
    PUBLISHED_HISTOGRAM,
    g,
    iterated_product_bound,
    sinc_pi_sqrt,
    limit_certificate,
    wallis_partial,
)
from gridcast.experiments import monte_carlo_F, monte_carlo_P, reference_alpha, worst_case_experiment
from gridcast.grid import GridSpec
from gridcast.reliable import VerifyReport, verify_reliable
from gridcast.sim import Schedule, run

ADVERSARIES = (SPOOF_SOURCE, VOTE_FORGERY, SILENT)
K2_VERIFY_SOURCES = 32


def report(cid: str, passed: bool, detail: str, gate: bool = True) -> None:
    verdict = ("PASS" if passed else "FAIL") if gate else "INFO"
    line = f"[criterion {cid}] {verdict}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def test_c1_exhaustive_base_case():
    t0 = time.monotonic()
    res = worst_case_experiment(GridSpec(10, 1), "exhaustive")
    elapsed = time.monotonic() - t0
    failing = [r["byzantine"] for r in res.rows if not r["macro_correct"]]
    ok = res.tested == 100 and res.all_macro_correct and elapsed <= 300
    report("1", ok, f"{res.tested} single-Byzantine placements on 10x10, "
                    f"{100 - len(failing)} macro-correct, counterexamples={failing}, {elapsed:.1f}s")
    assert ok, failing


def test_c2_worst_case_fraction():
    t0 = time.monotonic()
    runs = [
        worst_case_experiment(GridSpec(10, 1), "exhaustive"),
        worst_case_experiment(GridSpec(10, 2), "clustered", count=300, seed=21),
        worst_case_experiment(GridSpec(10, 2), "spread", count=300, seed=22),
        worst_case_experiment(GridSpec(10, 2), "random", count=1000, seed=23),
    ]
    elapsed = time.monotonic() - t0
    bound = Fraction(96, 100)
    parts = [f"{r.mode}(k={r.k}, {r.tested} placements) min={r.min_reliable}/{r.total}" for r in runs]
    ok = all(r.min_fraction >= bound and r.passed for r in runs) and elapsed <= 1800
    report("2", ok, "; ".join(parts) + f"; bound 96/100 exact; {elapsed:.1f}s")
    assert ok


def test_c3_limit_certificate():
    t0 = time.monotonic()
    cert = limit_certificate(10, PUBLISHED_ALPHA, BETA)
    wallis_err = abs(wallis_partial(0.25, 10**6) - sinc_pi_sqrt(0.25))
    elapsed = time.monotonic() - t0
    ok = cert.passed and cert.bound >= 1 - 1e-4 and wallis_err <= 1e-4
    report("3", ok, f"alpha=9856/9900 gamma={cert.gamma:.6f} i0={cert.i0} H_limit(beta)={cert.bound:.8f} "
                    f">= 0.9999; Wallis |err|={wallis_err:.2e} at x=0.25; {elapsed:.1f}s")
    assert ok


def test_c4_monte_carlo_vs_bound():
    t0 = time.monotonic()
    mu = 0.999
    p = monte_carlo_P(mu, 10, 10**4, seed=41)
    f1 = monte_carlo_F(mu, GridSpec(10, 1), 10**4, seed=42)
    f2 = monte_carlo_F(mu, GridSpec(10, 2), 10**3, seed=43)
    elapsed = time.monotonic() - t0
    checks = [
        ("P", p, g(mu)),
        ("F1", f1, iterated_product_bound(mu, 1)),
        ("F2", f2, iterated_product_bound(mu, 2)),
    ]
    ok = all(r.estimate + 3 * r.stderr >= b and not r.partial for _, r, b in checks) and elapsed <= 1200
    detail = "; ".join(f"{name}={r.estimate:.5f}+-{r.stderr:.5f} (n={r.trials}) vs bound {b:.5f}"
                       for name, r, b in checks)
    report("4", ok, f"mu=0.999: {detail}; {elapsed:.1f}s")
    assert ok


SCENARIOS = [
    (GridSpec(10, 1), [(4, 4)], [((0, 0), b"a"), ((9, 9), b"b"), ((3, 7), b"c")], SPOOF_SOURCE),
    (GridSpec(10, 1), [(4, 4), (6, 2)], [((0, 0), b"a"), ((9, 9), b"b")], SPOOF_SOURCE),
    (GridSpec(4, 2), [(5, 5)], [((0, 0), b"a"), ((15, 15), b"b")], VOTE_FORGERY),
    (GridSpec(4, 2), [(1, 1), (2, 2), (9, 13)], [((8, 8), b"a"), ((15, 0), b"b")], SPOOF_SOURCE),
]


def test_c5_schedule_invariance():
    t0 = time.monotonic()
    distinct, exceptions, runs = 0, 0, 0
    for spec, byz, bcs, kind in SCENARIOS:
        corr = CorrectnessMap.from_byzantine(spec.side(), byz)
        adversary = AdversaryStrategy(kind, fake_source=bcs[0][0], seed=1)
        outcomes = set()
        for seed in range(20):
            try:
                tr = run(spec, corr, adversary, Schedule("random", 1000 + seed), bcs, record=False)
            except Exception:  # noqa: BLE001 - counting is the point
                exceptions += 1
                continue
            runs += 1
            outcomes.add(frozenset((v, frozenset(a)) for v, a in tr.accepted.items()))
        distinct += len(outcomes) - 1
    elapsed = time.monotonic() - t0
    ok = distinct == 0 and exceptions == 0 and runs == 20 * len(SCENARIOS)
    report("5", ok, f"{len(SCENARIOS)} scenarios (k=1 n=10, k=2 n=4) x 20 seeds: {runs} runs, "
                    f"{distinct} divergent outcomes, {exceptions} exceptions; {elapsed:.1f}s")
    assert ok


def test_c6_empirical_reliability():
    t0 = time.monotonic()
    total = VerifyReport()
    spec1 = GridSpec(10, 1)
    for i in range(10):
        for j in range(10):
            corr = CorrectnessMap.from_byzantine(10, [(i, j)])
            total.merge(verify_reliable(spec1, corr, adversaries=ADVERSARIES, seed=i * 10 + j))
    spec2 = GridSpec(4, 2)
    rng = np.random.default_rng(61)
    for t in range(50):
        if t % 2 == 0:
            cells = rng.choice(256, size=2, replace=False)
            corr = CorrectnessMap.from_byzantine(16, [(int(c) // 16, int(c) % 16) for c in cells])
        else:
            corr = CorrectnessMap.random(16, 0.98, rng)
        total.merge(verify_reliable(spec2, corr, adversaries=ADVERSARIES, seed=600 + t,
                                    max_sources=K2_VERIFY_SOURCES))
    elapsed = time.monotonic() - t0
    ok = total.ok and elapsed <= 3600
    report("6", ok, f"{total.runs} runs, {total.pairs_checked} (source, receiver) pairs in Rel: "
                    f"{total.safety_violations} safety violations, {total.liveness_failures} liveness failures, "
                    f"{total.truncated_runs} truncated; k=2 samples {K2_VERIFY_SOURCES} sources per run; "
                    f"{elapsed:.1f}s")
    assert ok, total.counterexamples[:3]


def test_c7_scale():
    t0 = time.monotonic()
    spec = GridSpec(10, 2)
    tr = run(spec, CorrectnessMap.all_correct(100), schedule=Schedule("random", 71),
             broadcasts=[((37, 55), b"scale")], record=False)
    elapsed = time.monotonic() - t0
    accepted = tr.accepted_count((37, 55), b"scale")
    ok = accepted == 10**4 and tr.delivered <= 10**8 and not tr.truncated and elapsed <= 600
    report("7", ok, f"G_2 n=10: {accepted}/10000 accepted, {tr.delivered} envelopes delivered, {elapsed:.1f}s")
    assert ok


def test_c8_non_gated_items():
    hist = single_byzantine_histogram(10)
    published = {size: count for count, size in PUBLISHED_HISTOGRAM}
    report("8", True, f"histogram cross-check: reference protocol {dict(sorted(hist.items(), reverse=True))} "
                      f"vs published {published} (not a gate)", gate=False)
    alpha = reference_alpha(10)
    cert = limit_certificate(10, alpha)
    report("8", True, f"certificate with enumerated alpha={alpha} -> "
                      f"{'pass' if cert.passed else 'fail at ' + str(cert.first_failure)}, "
                      f"H_limit(beta)={cert.bound:.8f}", gate=False)
    report("8", True, "placements of 2^(k-1) Byzantines at k>=2 are searched (criterion 2), "
                      "not enumerated; no counterexample found", gate=False)
