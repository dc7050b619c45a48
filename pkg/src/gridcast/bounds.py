"""Analytic reliability bounds for random Byzantine placement.

Notation used throughout:

* ``P(mu)``: probability that an ``n x n`` grid with i.i.d. correct nodes
  (probability ``mu``) is a correct macro-node *and* a uniformly chosen node is
  reliable;
* ``g``: the zero-or-one-Byzantine lower bound on ``P``;
* ``f(gamma, mu) = 1 - gamma (1 - mu)``: its linear minorant near 1;
* ``H_k``: the product bound ``prod_{i<=k} f(gamma**i, mu)`` on the expected
  reliable fraction of ``G_k``, and ``H_limit`` its ``k -> inf`` bound via the
  Wallis product ``prod (1 - x/i^2) = sin(pi sqrt x) / (pi sqrt x)``.

Probabilities near 1 are handled through ``1 - value`` with ``log1p``/``expm1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

PUBLISHED_HISTOGRAM = ((64, 99), (32, 98), (4, 96))
PUBLISHED_ALPHA = Fraction(64 * 99 + 32 * 98 + 4 * 96, 100 * 99)
BETA = 1 - 1e-5
TARGET = 1 - 1e-4
I0_CAP = 10**6


def alpha_from_counts(histogram, grid_nodes: int) -> Fraction:
    """Probability that a random correct node is reliable, given one Byzantine node.

    ``histogram`` lists ``(count, rel_size)`` over all single-Byzantine
    placements; counts must add up to ``grid_nodes``.
    """
    pairs = [(int(c), int(s)) for c, s in histogram]
    placements = sum(c for c, _ in pairs)
    if placements != grid_nodes:
        raise ValueError(f"histogram covers {placements} placements, expected {grid_nodes}")
    if any(c < 0 or not 0 <= s <= grid_nodes - 1 for c, s in pairs):
        raise ValueError("histogram counts must be >= 0 and sizes within [0, nodes-1]")
    return Fraction(sum(c * s for c, s in pairs), placements * (grid_nodes - 1))


def one_minus_g(eps: float, n: int, alpha: float) -> float:
    """``1 - g(1 - eps)`` computed without cancellation against 1."""
    nn = n * n
    if eps <= 0.0:
        return 0.0
    if eps >= 1.0:
        return 1.0
    lg = math.log1p(-eps)
    return -math.expm1(nn * lg) - float(alpha) * nn * eps * math.exp((nn - 1) * lg)


def g(mu0: float, n: int = 10, alpha=PUBLISHED_ALPHA) -> float:
    """``mu^(n^2) + alpha n^2 (1 - mu) mu^(n^2 - 1)``."""
    if not 0.0 <= mu0 <= 1.0:
        raise ValueError("mu0 must lie in [0, 1]")
    return 1.0 - one_minus_g(1.0 - mu0, n, alpha)


def g_iter(mu: float, times: int, n: int = 10, alpha=PUBLISHED_ALPHA) -> float:
    for _ in range(times):
        mu = g(mu, n, alpha)
    return mu


def iterated_product_bound(mu: float, k: int, n: int = 10, alpha=PUBLISHED_ALPHA) -> float:
    """``prod_{i=1..k} g^i(mu)``, the lower bound on the expected reliable fraction of ``G_k``."""
    out = 1.0
    x = mu
    for _ in range(k):
        x = g(x, n, alpha)
        out *= x
    return out


def linear_minorant(gamma: float, mu: float) -> float:
    return 1.0 - gamma * (1.0 - mu)


def gamma_from(beta: float = BETA, n: int = 10, alpha=PUBLISHED_ALPHA) -> float:
    eps = 1.0 - beta
    return one_minus_g(eps, n, alpha) / eps


def H_k(mu: float, gamma: float, k: int) -> float:
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    out = 1.0
    gi = 1.0
    for _ in range(k):
        gi *= gamma
        out *= linear_minorant(gi, mu)
    return out


def find_i0(gamma: float, cap: int = I0_CAP) -> int:
    """Least ``i0`` with ``gamma**i <= 1/i**2`` for every ``i >= i0``.

    ``i^2 gamma^i`` increases up to ``2/ln(1/gamma)`` and decreases after, so the
    scan stops at the first index past that turning point where the inequality
    holds.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    turn = 2.0 / math.log(1.0 / gamma)
    last_bad = 0
    i = 1
    while i <= cap:
        ok = 2 * math.log(i) + i * math.log(gamma) <= 0.0
        if not ok:
            last_bad = i
        elif i >= turn:
            return last_bad + 1
        i += 1
    raise ValueError(f"no i0 found below {cap} for gamma={gamma}")


def sinc_pi_sqrt(x: float) -> float:
    """``sin(pi sqrt x) / (pi sqrt x)``, equal to 1 at ``x = 0``."""
    if x < 0:
        raise ValueError("x must be >= 0")
    if x == 0.0:
        return 1.0
    t = math.pi * math.sqrt(x)
    if t < 1e-4:
        return 1.0 - t * t / 6.0
    return math.sin(t) / t


def wallis_partial(x: float, terms: int) -> float:
    """``prod_{i=1..terms} (1 - x/i^2)`` summed in log space."""
    return math.exp(math.fsum(math.log1p(-x / (i * i)) for i in range(1, terms + 1)))


def H_limit(mu: float, gamma: float) -> float:
    i0 = find_i0(gamma)
    return H_k(mu, gamma, i0) * sinc_pi_sqrt(1.0 - mu)


# ---------------------------------------------------------------------------


@dataclass
class Certificate:
    n: int
    alpha: float
    beta: float
    target: float
    steps: list = field(default_factory=list)
    gamma: float | None = None
    i0: int | None = None
    bound: float | None = None

    @property
    def passed(self) -> bool:
        return all(s["passed"] for s in self.steps if s.get("gate", True))

    @property
    def first_failure(self) -> str | None:
        for s in self.steps:
            if s.get("gate", True) and not s["passed"]:
                return s["name"]
        return None

    def _add(self, name: str, passed: bool, value=None, gate: bool = True, **extra) -> bool:
        self.steps.append({"name": name, "passed": bool(passed), "value": value, "gate": gate, **extra})
        return bool(passed)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "alpha": self.alpha,
            "beta": self.beta,
            "target": self.target,
            "gamma": self.gamma,
            "i0": self.i0,
            "bound": self.bound,
            "passed": self.passed,
            "first_failure": self.first_failure,
            "steps": self.steps,
        }


def limit_certificate(
    n: int = 10,
    alpha=PUBLISHED_ALPHA,
    beta: float = BETA,
    target: float = TARGET,
    samples: int = 2001,
    chain_depth: int = 6,
) -> Certificate:
    """Evaluate beta -> g(beta) -> gamma -> i0 -> H_limit(beta) and check every link.

    Stops at the first failing gate.  The curvature of ``g`` on ``[beta, 1]`` is
    measured and reported but not relied upon: the minorant inequality is
    checked directly on a dense grid instead.
    """
    a = float(alpha)
    cert = Certificate(n=n, alpha=a, beta=beta, target=target)
    if not cert._add("alpha_in_unit_interval", 0.0 <= a <= 1.0, a):
        return cert
    g_beta = g(beta, n, alpha)
    cert._add("g(beta)", True, g_beta, gate=False)
    gamma = gamma_from(beta, n, alpha)
    cert.gamma = gamma
    if not cert._add("gamma_below_1", 0.0 < gamma < 1.0, gamma):
        return cert

    eps_beta = 1.0 - beta
    epsilons = [eps_beta * t / (samples - 1) for t in range(samples)]
    worst = max(one_minus_g(e, n, alpha) - gamma * e for e in epsilons)
    if not cert._add("g_dominates_minorant_on_[beta,1]", worst <= 1e-12 * eps_beta, worst):
        return cert

    h = eps_beta / (samples - 1)
    second = [
        (one_minus_g(e + h, n, alpha) - 2 * one_minus_g(e, n, alpha) + one_minus_g(max(e - h, 0.0), n, alpha))
        for e in epsilons[1:-1]
    ]
    # second difference of g is the negative of that of 1 - g
    signs = {"negative": sum(1 for s in second if -s < 0), "positive": sum(1 for s in second if -s > 0)}
    cert._add("g_second_difference_sign", True, signs, gate=False)

    chain_ok = True
    for k in range(1, chain_depth + 1):
        for e in epsilons[:: max(1, samples // 50)]:
            mu = 1.0 - e
            if g_iter(mu, k, n, alpha) < linear_minorant(gamma**k, mu) - 1e-15:
                chain_ok = False
    if not cert._add("iterated_g_dominates_f(gamma^k)", chain_ok, chain_depth):
        return cert

    try:
        i0 = find_i0(gamma)
    except ValueError as exc:
        cert._add("i0_found", False, str(exc))
        return cert
    cert.i0 = i0
    cert._add("i0_found", True, i0)

    bound = H_limit(beta, gamma)
    cert.bound = bound
    cert._add("H_limit(beta)>=target", bound >= target, bound)
    return cert


def bound_curve(mus, n: int = 10, alpha=PUBLISHED_ALPHA, beta: float = BETA, ks=(1, 2, 3),
                gamma: float | None = None) -> list[dict]:
    """Table rows of ``g``, ``H_k`` and ``H_limit`` over a sweep of ``mu``.

    ``gamma`` defaults to the slope derived from ``beta``; passing one
    overrides it (values outside ``(0, 1)`` raise ``ValueError``).
    """
    if gamma is None:
        gamma = gamma_from(beta, n, alpha)
    i0 = find_i0(gamma)
    rows = []
    for mu in mus:
        row = {"mu": mu, "g": g(mu, n, alpha), "gamma": gamma, "i0": i0}
        for k in ks:
            row[f"H_{k}"] = H_k(mu, gamma, k)
            row[f"iterated_{k}"] = iterated_product_bound(mu, k, n, alpha)
        row["H_limit"] = H_k(mu, gamma, i0) * sinc_pi_sqrt(1.0 - mu)
        rows.append(row)
    return rows
