import math
from fractions import Fraction

import numpy as np
import pytest

from gridcast.bounds import g, iterated_product_bound
from gridcast.experiments import (
    clustered_placement,
    monte_carlo_F,
    monte_carlo_P,
    reference_alpha,
    spread_placement,
    worst_case_experiment,
)
from gridcast.grid import GridSpec


def test_p_degenerate_probabilities():
    assert monte_carlo_P(1.0, 10, 50, seed=1).estimate == 1.0
    assert monte_carlo_P(0.0, 10, 50, seed=1).estimate == 0.0


def test_p_is_reproducible_and_split_independent():
    a = monte_carlo_P(0.99, 6, 300, seed=9)
    b = monte_carlo_P(0.99, 6, 300, seed=9)
    c = monte_carlo_P(0.99, 6, 300, seed=9, workers=2)
    assert a.estimate == b.estimate == c.estimate
    assert a.stderr == c.stderr


def test_p_above_g():
    res = monte_carlo_P(0.995, 10, 3000, seed=4)
    assert res.estimate + 3 * res.stderr >= g(0.995)


def test_f_basic():
    assert monte_carlo_F(1.0, GridSpec(4, 2), 5, seed=0).estimate == 1.0
    res = monte_carlo_F(0.999, GridSpec(10, 1), 500, seed=2)
    assert res.estimate + 3 * res.stderr >= iterated_product_bound(0.999, 1)
    with pytest.raises(ValueError):
        monte_carlo_F(0.9, GridSpec(4, 4), 1, seed=0)
    with pytest.raises(ValueError):
        monte_carlo_F(0.9, GridSpec(4, 1), 0, seed=0)


def test_partial_flag():
    res = monte_carlo_F(0.99, GridSpec(4, 2), 10**6, seed=0, max_seconds=0.05)
    assert res.partial and res.trials < 10**6
    assert res.to_dict()["partial"] is True


def test_reference_alpha():
    a = reference_alpha(10)
    assert a == Fraction(92 * 99 + 8 * 98, 100 * 99)
    assert a > Fraction(199, 200)


def test_exhaustive_k1():
    res = worst_case_experiment(GridSpec(10, 1))
    assert res.tested == 100 and res.all_macro_correct
    assert res.min_fraction == Fraction(98, 100)
    assert res.passed
    with pytest.raises(ValueError):
        worst_case_experiment(GridSpec(4, 2))
    with pytest.raises(ValueError):
        worst_case_experiment(GridSpec(4, 2), "clustered")  # no seed


def test_clustered_and_spread_shapes():
    spec = GridSpec(4, 3)
    rng = np.random.default_rng(0)
    for _ in range(20):
        byz = clustered_placement(spec, 4, rng)
        assert len(set(byz)) == 4
        clusters = [(i // 4, j // 4) for i, j in byz]
        assert all(clusters.count(c) == 2 for c in clusters)
        assert len({(a // 4, b // 4) for a, b in clusters}) == 1
        spread = spread_placement(spec, 4, rng)
        assert len({(i // 4, j // 4) for i, j in spread}) == 4


def test_spreading_is_no_worse_than_clustering():
    spec = GridSpec(10, 2)
    clustered = worst_case_experiment(spec, "clustered", count=100, seed=1)
    spread = worst_case_experiment(spec, "spread", count=100, seed=1)
    assert clustered.passed and spread.passed
    assert spread.min_fraction >= clustered.min_fraction


def test_exact_bound_comparison():
    res = worst_case_experiment(GridSpec(4, 2), "random", count=30, seed=5)
    bound = Fraction(12, 16)
    assert res.passed == (res.min_fraction >= bound)
    assert math.isclose(res.to_dict()["bound"], 0.75)
