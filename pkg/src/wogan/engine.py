"""Online WGAN test generation: biased batches, analyzer screening and the outer loop."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .baselines import draw_valid, random_walk_test
from .errors import BudgetTooSmall, ConfigError, EmptyArchive, NoValidCandidate
from .geometry import KAPPA_MAX, GeometryConfig, is_valid
from .nn import AdamState, DenseNet, Wgan, WganHyper, build_analyzer, build_wgan, train_analyzer, train_wgan_step
from .records import Budget, Executor, TestSuite

ALPHA_MAX = 3.0


@dataclass(frozen=True)
class WoganConfig:
    initial_tests: int = 60
    target_reducer: float = 0.95
    latent_dim: int = 10
    test_dim: int = 5
    budget_tests: int | None = 300
    budget_seconds: float | None = None
    inner_loop_cap: int = 1000
    failure_threshold: float = 0.95
    bins: int = 10
    batch_size: int = 32
    # "scan": descending acceptance scan; "proportional": bins drawn with probability ~ weight
    sampler: str = "scan"
    wgan_steps_per_round: int = 1
    analyzer_epochs_per_round: int = 1
    analyzer_lr: float = 0.001
    analyzer_beta1: float = 0.0
    analyzer_beta2: float = 0.9
    analyzer_hidden: int = 32
    wgan_hidden: int = 128

    def __post_init__(self):
        if not 0 < self.target_reducer < 1:
            raise ConfigError("target_reducer must lie in (0, 1)")
        if self.initial_tests < 1:
            raise ConfigError("initial_tests must be at least 1")
        if self.bins < 1 or self.batch_size < 1:
            raise ConfigError("bins and batch_size must be at least 1")
        if self.sampler not in ("scan", "proportional"):
            raise ConfigError("sampler must be 'scan' or 'proportional'")
        if self.inner_loop_cap < 1:
            raise ConfigError("inner_loop_cap must be at least 1")

    def budget(self, clock=None) -> Budget:
        return Budget(self.budget_tests, self.budget_seconds, clock)


# ---------------------------------------------------------------------------
# biased batch sampling

def bin_index(fitness: float, bins: int) -> int:
    return min(bins - 1, int(math.floor(fitness * bins)))


def bin_weight(midpoint: float, alpha: float) -> float:
    return 1.0 / (1.0 + math.exp(-(midpoint + alpha)))


def bin_midpoint(i: int, bins: int) -> float:
    return (i + 0.5) / bins


def update_batch_parameter(progress: float) -> float:
    return ALPHA_MAX * min(1.0, max(0.0, progress))


def scan_probabilities(weights: Sequence[float]) -> np.ndarray:
    """Selection probabilities of the descending scan over bins with acceptance ``weights``.

    ``weights`` run from the highest bin down. The scan accepts bin k with
    probability w_k and restarts after rejecting everything, so bin k is chosen
    with probability w_k * prod_{j<k}(1 - w_j) / (1 - prod_j(1 - w_j)).
    """
    w = np.asarray(weights, dtype=float)
    reach = np.concatenate(([1.0], np.cumprod(1.0 - w)[:-1]))
    return w * reach / (1.0 - np.prod(1.0 - w))


def _pick_bin(order: Sequence[int], weights: Sequence[float], mode: str, rng: np.random.Generator) -> int:
    if mode == "proportional":
        w = np.asarray(weights)
        return order[int(rng.choice(len(order), p=w / w.sum()))]
    while True:
        for b, w in zip(order, weights):
            if rng.random() < w:
                return b


def sample_batch(tests: Sequence, fitnesses: Sequence[float], bins: int, batch_size: int, alpha: float,
                 rng: np.random.Generator, mode: str = "scan") -> np.ndarray:
    """Fitness-biased batch of ``min(batch_size, len(tests))`` tests.

    Each slot picks a bin (highest fitness first under the scan) and takes a
    test from it uniformly without replacement; a bin whose tests are all used
    in this batch is refilled.
    """
    tests = np.asarray(tests, dtype=float)
    if len(tests) == 0:
        raise EmptyArchive("cannot sample from an empty archive")
    if len(tests) <= batch_size:
        return tests[rng.permutation(len(tests))]
    members: dict[int, list[int]] = {}
    for i, f in enumerate(fitnesses):
        members.setdefault(bin_index(float(f), bins), []).append(i)
    order = sorted(members, reverse=True)
    weights = [bin_weight(bin_midpoint(b, bins), alpha) for b in order]
    pools: dict[int, list[int]] = {}
    chosen = []
    for _ in range(batch_size):
        b = _pick_bin(order, weights, mode, rng)
        if not pools.get(b):
            pools[b] = list(members[b])
        pool = pools[b]
        chosen.append(pool.pop(int(rng.integers(len(pool)))))
    return tests[chosen]


# ---------------------------------------------------------------------------
# candidate generation

@dataclass(frozen=True)
class Candidate:
    test: np.ndarray
    prediction: float
    valid_draws: int
    total_draws: int
    target: float
    accepted: bool  # False when returned as the best-prediction fallback


def generate_candidate(generate: Callable[[np.random.Generator], np.ndarray],
                       predict: Callable[[np.ndarray], float],
                       valid: Callable[[np.ndarray], bool],
                       cfg: WoganConfig, rng: np.random.Generator) -> Candidate:
    """Draw generator samples until the analyzer scores a valid one above a decaying target.

    The target starts at 1 and is multiplied by ``target_reducer`` after each
    valid draw, before that draw is scored. Invalid draws leave it unchanged.
    """
    target = 1.0
    n_valid = 0
    n_draws = 0
    best: tuple[float, np.ndarray] | None = None
    while n_valid < cfg.inner_loop_cap:
        if n_valid == 0 and n_draws >= cfg.inner_loop_cap:
            raise NoValidCandidate(f"no valid test in {n_draws} draws")
        test = generate(rng)
        n_draws += 1
        if not valid(test):
            continue
        n_valid += 1
        target *= cfg.target_reducer
        score = float(predict(test))
        if score >= target:
            return Candidate(test, score, n_valid, n_draws, target, True)
        if best is None or score > best[0]:
            best = (score, test)
    return Candidate(best[1], best[0], n_valid, n_draws, target, False)


# ---------------------------------------------------------------------------
# outer loop

class WoganGenerator:
    """State of one online campaign: archive, analyzer, WGAN and batch parameter."""

    def __init__(self, sut, cfg: WoganConfig = WoganConfig(), geometry: GeometryConfig = GeometryConfig(),
                 hyper: WganHyper | None = None, rng: np.random.Generator | None = None,
                 sink=None, clock=None):
        self.sut = sut
        self.cfg = cfg
        self.geometry = geometry
        self.hyper = hyper or WganHyper(batch_size=cfg.batch_size)
        self.rng = np.random.default_rng() if rng is None else rng
        self.budget = cfg.budget(clock)
        if self.budget.max_tests is not None and self.budget.max_tests < cfg.initial_tests:
            raise BudgetTooSmall(f"budget {self.budget.max_tests} < initial tests {cfg.initial_tests}")
        self.suite = TestSuite(sink=sink)
        self.alpha = 0.0
        self.alpha_history: list[float] = []
        self.candidates: list[Candidate] = []
        kappa = geometry.kappa_max
        self.analyzer: DenseNet = build_analyzer(cfg.test_dim, self.rng, cfg.analyzer_hidden, kappa)
        self.analyzer_opt = AdamState(cfg.analyzer_lr, cfg.analyzer_beta1, cfg.analyzer_beta2)
        self.wgan: Wgan = build_wgan(cfg.test_dim, self.rng, self.hyper, cfg.latent_dim, cfg.wgan_hidden, kappa)

    def valid(self, test) -> bool:
        return is_valid(test, self.geometry)

    def _generate(self, rng: np.random.Generator) -> np.ndarray:
        z = self.wgan.sample_latent(1, rng)[0]
        return self.wgan.generator.forward(z)

    def _predict(self, test) -> float:
        return float(self.analyzer.forward(test)[0])

    def train(self) -> None:
        cfg = self.cfg
        tests = np.array(self.suite.tests())
        fit = self.suite.fitnesses()
        train_analyzer(self.analyzer, tests, fit, cfg.analyzer_epochs_per_round, self.analyzer_opt,
                       self.rng, self.hyper.batch_size)
        for _ in range(cfg.wgan_steps_per_round):
            batch = sample_batch(tests, fit, cfg.bins, cfg.batch_size, self.alpha, self.rng, cfg.sampler)
            train_wgan_step(self.wgan, batch, self.rng)

    def run(self) -> TestSuite:
        cfg, clock = self.cfg, self.budget.clock
        ex = Executor(self.sut, self.suite, clock)
        while len(self.suite) < cfg.initial_tests and not self.budget.exhausted(len(self.suite)):
            test = draw_valid(lambda: random_walk_test(cfg.test_dim, self.rng), self.geometry)
            ex.execute(test, "random_init")
        while not self.budget.exhausted(len(self.suite)):
            self.alpha = update_batch_parameter(self.budget.progress(len(self.suite)))
            self.alpha_history.append(self.alpha)
            t0 = clock.now()
            self.train()
            training_time = clock.now() - t0
            cand = generate_candidate(self._generate, self._predict, self.valid, cfg, self.rng)
            self.candidates.append(cand)
            ex.execute(cand.test, "wogan", training_time)
        return self.suite


def wogan_run(sut, cfg: WoganConfig = WoganConfig(), geometry: GeometryConfig = GeometryConfig(),
              hyper: WganHyper | None = None, rng: np.random.Generator | None = None, sink=None,
              clock=None) -> TestSuite:
    return WoganGenerator(sut, cfg, geometry, hyper, rng, sink, clock).run()
