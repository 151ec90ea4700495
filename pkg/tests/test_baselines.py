import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wogan.baselines import (
    FreneticConfig,
    frenetic_mutate_failed,
    frenetic_mutate_passed,
    frenetic_run,
    mirror,
    random_search_run,
    random_walk_test,
    reverse_cartesian,
    reverse_curvatures,
    split_swap,
    uniform_random_test,
)
from wogan.errors import BudgetTooSmall
from wogan.geometry import curvature_to_points, is_valid

kappa = st.floats(-0.07, 0.07, allow_nan=False)


def fake_sut(test):
    return min(1.0, abs(float(np.sum(test))) * 5)


def test_random_walk_contract():
    rng = np.random.default_rng(0)
    for d in (1, 5, 20):
        t = random_walk_test(d, rng)
        assert len(t) == d and np.all(np.abs(t) <= 0.07)
        assert np.all(np.abs(np.diff(t)) <= 0.05 + 1e-15)


def test_random_walk_clamps_at_upper_bound():
    class Pinned:
        """First draw lands on the bound, later draws take the low end."""

        def __init__(self):
            self.calls = 0

        def uniform(self, lo, hi):
            self.calls += 1
            return hi if self.calls == 1 else lo

    t = random_walk_test(2, Pinned())
    assert t[0] == 0.07 and t[1] == pytest.approx(0.02)


def test_random_walk_reproducible():
    a = random_walk_test(5, np.random.default_rng(3))
    b = random_walk_test(5, np.random.default_rng(3))
    np.testing.assert_array_equal(a, b)


def test_uniform_random_mean_and_range():
    rng = np.random.default_rng(1)
    draws = np.array([uniform_random_test(5, rng) for _ in range(10_000)])
    assert np.all(np.abs(draws) <= 0.07)
    assert np.all(np.abs(draws.mean(axis=0)) < 0.005)


def test_random_search_budget_and_tags():
    suite = random_search_run(fake_sut, 10, np.random.default_rng(0))
    assert len(suite) == 10
    assert {r.source for r in suite} == {"random_baseline"}
    assert all(is_valid(r.test) for r in suite)


# -- mutators ---------------------------------------------------------------

def test_mutator_examples():
    t = np.array([1.0, 2.0, 3.0, 4.0, 5.0]) / 100
    np.testing.assert_array_equal(reverse_curvatures(t), t[::-1])
    np.testing.assert_array_equal(mirror(t), -t)
    np.testing.assert_array_equal(split_swap(t), t[[3, 4, 0, 1, 2]])
    np.testing.assert_array_equal(reverse_cartesian(t), -t[::-1])
    assert len(frenetic_mutate_failed(t)) == 4


@given(st.lists(kappa, min_size=2, max_size=12))
def test_mutator_involutions(ks):
    t = np.array(ks)
    np.testing.assert_array_equal(reverse_curvatures(reverse_curvatures(t)), t)
    np.testing.assert_array_equal(mirror(mirror(t)), t)
    np.testing.assert_array_equal(reverse_cartesian(reverse_cartesian(t)), t)
    if len(t) % 2 == 0:
        np.testing.assert_array_equal(split_swap(split_swap(t)), t)


@given(st.lists(kappa, min_size=2, max_size=8))
@settings(max_examples=50)
def test_reverse_cartesian_matches_backward_traversal(ks):
    # Interior turns of the road driven from its far end are the mutant's curvatures
    # except the last one (the first curvature also sets the first segment's heading).
    pts = curvature_to_points(ks)[::-1]
    d = np.diff(pts, axis=0)
    heading = np.unwrap(np.arctan2(d[:, 1], d[:, 0]))
    turns = np.diff(heading) / 15
    np.testing.assert_allclose(turns, reverse_cartesian(ks)[:-1], atol=1e-9)


def test_passed_mutation_zero_scale_is_identity():
    cfg = FreneticConfig(passed_mutation_scale=0.0, length_jitter_probability=0.0)
    t = np.array([0.01, -0.02, 0.03])
    np.testing.assert_array_equal(frenetic_mutate_passed(t, np.random.default_rng(0), cfg), t)


def test_passed_mutation_folded_normal_mean():
    cfg = FreneticConfig(length_jitter_probability=0.0)
    rng = np.random.default_rng(4)
    t = np.zeros(5)
    diffs = np.array([np.abs(frenetic_mutate_passed(t, rng, cfg) - t) for _ in range(1000)])
    expected = cfg.passed_mutation_scale * math.sqrt(2 / math.pi)
    assert diffs.mean() == pytest.approx(expected, rel=0.2)


def test_passed_mutation_stays_in_range():
    cfg = FreneticConfig(passed_mutation_scale=0.05, length_jitter_probability=0.5)
    rng = np.random.default_rng(5)
    t = np.full(6, 0.07)
    for _ in range(200):
        m = frenetic_mutate_passed(t, rng, cfg)
        assert np.all(np.abs(m) <= 0.07) and abs(len(m) - 6) <= 1


# -- frenetic run -----------------------------------------------------------

def test_frenetic_random_phase_only():
    cfg = FreneticConfig(init_population=8)
    suite = frenetic_run(fake_sut, 8, np.random.default_rng(0), cfg)
    assert len(suite) == 8
    assert all(15 <= len(r.test) + 1 <= 25 for r in suite)


def test_frenetic_budget_too_small():
    with pytest.raises(BudgetTooSmall):
        frenetic_run(fake_sut, 5, np.random.default_rng(0), FreneticConfig(init_population=8))


def test_frenetic_executes_only_valid_roads():
    cfg = FreneticConfig(init_population=8)
    suite = frenetic_run(fake_sut, 30, np.random.default_rng(1), cfg)
    assert len(suite) == 30
    assert all(is_valid(r.test) for r in suite)
    assert {r.source for r in suite} == {"frenetic"}
