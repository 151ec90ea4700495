"""Random-search and Frenetic-style genetic baselines."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import BudgetTooSmall, ConfigError
from .geometry import KAPPA_MAX, GeometryConfig, is_valid
from .records import Budget, Executor, TestSuite

RANDOM_WALK_STEP = 0.05


def random_walk_test(d: int, rng: np.random.Generator, step: float = RANDOM_WALK_STEP,
                     kappa_max: float = KAPPA_MAX) -> np.ndarray:
    """Curvatures where each component stays within ``step`` of the previous one."""
    if d < 1:
        raise ValueError("d must be at least 1")
    out = np.empty(d)
    out[0] = rng.uniform(-kappa_max, kappa_max)
    for i in range(1, d):
        out[i] = min(kappa_max, max(-kappa_max, rng.uniform(out[i - 1] - step, out[i - 1] + step)))
    return out


def uniform_random_test(d: int, rng: np.random.Generator, kappa_max: float = KAPPA_MAX) -> np.ndarray:
    if d < 1:
        raise ValueError("d must be at least 1")
    return rng.uniform(-kappa_max, kappa_max, size=d)


def draw_valid(sample: Callable[[], np.ndarray], geometry: GeometryConfig, max_draws: int = 100_000) -> np.ndarray:
    for _ in range(max_draws):
        test = sample()
        if is_valid(test, geometry):
            return test
    raise RuntimeError(f"no valid test in {max_draws} draws")


def random_search_run(sut, budget: Budget | int, rng: np.random.Generator, d: int = 5,
                      geometry: GeometryConfig = GeometryConfig(), sink=None) -> TestSuite:
    """Execute uniformly random valid tests until the budget is spent.

    Invalid draws cost generation time only.
    """
    if isinstance(budget, int):
        budget = Budget(max_tests=budget)
    suite = TestSuite(sink=sink)
    ex = Executor(sut, suite, budget.clock)
    while not budget.exhausted(len(suite)):
        test = draw_valid(lambda: uniform_random_test(d, rng), geometry)
        ex.execute(test, "random_baseline")
    return suite


# ---------------------------------------------------------------------------
# Frenetic mutators

def reverse_curvatures(test) -> np.ndarray:
    return np.asarray(test, dtype=float)[::-1].copy()


def mirror(test) -> np.ndarray:
    return -np.asarray(test, dtype=float)


def split_swap(test) -> np.ndarray:
    """Swap the first ceil(d/2) components with the rest."""
    t = np.asarray(test, dtype=float)
    h = math.ceil(len(t) / 2)
    return np.concatenate((t[h:], t[:h]))


def reverse_cartesian(test) -> np.ndarray:
    """Reversed and negated curvatures.

    Driving a road from its far end reverses its turns and flips their sign; the
    mutant carries that turn sequence in the fixed-start representation.
    """
    return -np.asarray(test, dtype=float)[::-1]


def frenetic_mutate_failed(test) -> list[np.ndarray]:
    if len(test) < 2:
        raise ValueError("failed-test mutators need at least 2 curvatures")
    return [reverse_curvatures(test), mirror(test), split_swap(test), reverse_cartesian(test)]


@dataclass(frozen=True)
class FreneticConfig:
    init_population: int = 60
    road_points: int = 20
    road_points_spread: int = 5
    failure_threshold: float = 0.95
    passed_mutation_scale: float = 0.01
    length_jitter_probability: float = 0.1
    uniform_selection_probability: float = 0.05
    min_points: int = 3

    def __post_init__(self):
        if self.init_population < 1:
            raise ConfigError("init_population must be at least 1")
        if self.passed_mutation_scale < 0:
            raise ConfigError("passed_mutation_scale must be non-negative")


def frenetic_mutate_passed(test, rng: np.random.Generator, cfg: FreneticConfig = FreneticConfig(),
                           kappa_max: float = KAPPA_MAX) -> np.ndarray:
    """Gaussian curvature noise, occasionally growing or shrinking the road by one point."""
    t = np.asarray(test, dtype=float)
    out = np.clip(t + rng.normal(0.0, cfg.passed_mutation_scale, size=t.shape), -kappa_max, kappa_max) \
        if cfg.passed_mutation_scale > 0 else t.copy()
    if cfg.length_jitter_probability > 0 and rng.random() < cfg.length_jitter_probability:
        if rng.random() < 0.5 and len(out) > cfg.min_points - 1:
            out = np.delete(out, rng.integers(len(out)))
        else:
            pos = int(rng.integers(len(out) + 1))
            ref = out[min(pos, len(out) - 1)]
            new = min(kappa_max, max(-kappa_max, rng.uniform(ref - RANDOM_WALK_STEP, ref + RANDOM_WALK_STEP)))
            out = np.insert(out, pos, new)
    return out


def _select_parent(fitnesses: np.ndarray, rng: np.random.Generator, uniform_p: float) -> int:
    total = fitnesses.sum()
    if total <= 0 or rng.random() < uniform_p:
        return int(rng.integers(len(fitnesses)))
    return int(rng.choice(len(fitnesses), p=fitnesses / total))


def frenetic_run(sut, budget: Budget | int, rng: np.random.Generator, cfg: FreneticConfig = FreneticConfig(),
                 geometry: GeometryConfig = GeometryConfig(), sink=None) -> TestSuite:
    """Random phase of variable-length random walks, then steady-state mutation."""
    if isinstance(budget, int):
        budget = Budget(max_tests=budget)
    if budget.max_tests is not None and budget.max_tests < cfg.init_population:
        raise BudgetTooSmall(f"budget {budget.max_tests} < init_population {cfg.init_population}")
    suite = TestSuite(sink=sink)
    ex = Executor(sut, suite, budget.clock)

    def random_road():
        n_points = int(rng.integers(cfg.road_points - cfg.road_points_spread,
                                    cfg.road_points + cfg.road_points_spread + 1))
        return random_walk_test(max(1, n_points - 1), rng)

    while len(suite) < cfg.init_population and not budget.exhausted(len(suite)):
        ex.execute(draw_valid(random_road, geometry), "frenetic")

    pending: list[np.ndarray] = []
    while not budget.exhausted(len(suite)):
        if not pending:
            fit = suite.fitnesses()
            parent = suite[_select_parent(fit, rng, cfg.uniform_selection_probability)]
            p = np.array(parent.test)
            if parent.fitness > cfg.failure_threshold and len(p) >= 2:
                pending = frenetic_mutate_failed(p)
            else:
                pending = [frenetic_mutate_passed(p, rng, cfg)]
        child = pending.pop(0)
        if is_valid(child, geometry):
            ex.execute(child, "frenetic")
    return suite
