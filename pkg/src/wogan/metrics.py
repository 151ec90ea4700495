"""Suite statistics: failure counts, tail fitness, generation time and diversity."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy.spatial.distance import pdist

from .errors import EmptySuite, TooShort
from .geometry import GeometryConfig, RoadPolyline, road_from_test

DIVERSITY_POINTS = 75


def normalize_to_angles(road: RoadPolyline | np.ndarray, n_points: int = DIVERSITY_POINTS) -> np.ndarray:
    """Direction angles of ``n_points - 1`` segments after rotating the road to start upward."""
    line = road.centerline if isinstance(road, RoadPolyline) else np.asarray(road, dtype=float)
    if len(line) < n_points:
        raise TooShort(f"centerline has {len(line)} points, need {n_points}")
    idx = np.round(np.linspace(0, len(line) - 1, n_points)).astype(int)
    pts = line[idx]
    d = np.diff(pts, axis=0)
    ang = np.unwrap(np.arctan2(d[:, 1], d[:, 0]))
    # Rotation only shifts every direction by the same amount.
    return ang - ang[0] + math.pi / 2


def suite_diversity(suite, threshold: float = 0.95, geometry: GeometryConfig = GeometryConfig()) -> float | None:
    """Median pairwise distance between angle vectors of failing tests (None below 2 failures)."""
    failing = [r.test for r in suite if r.fitness > threshold]
    if len(failing) < 2:
        return None
    vecs = np.array([normalize_to_angles(road_from_test(t, geometry)) for t in failing])
    return float(np.median(pdist(vecs)))


@dataclass(frozen=True)
class SuiteStats:
    executed: int
    failing: int
    mean_fitness_final_80: float
    mean_fitness_final_20: float
    mean_generation_time: float
    sd_generation_time: float
    diversity: float | None

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def as_row(self) -> dict:
        return asdict(self)


def _tail_mean(values: np.ndarray, fraction: float) -> float:
    """Mean of the last ``fraction`` of values; at least one value is kept."""
    k = max(1, int(round(len(values) * fraction)))
    return float(values[-k:].mean())


def failing_count(suite, threshold: float = 0.95) -> int:
    return sum(1 for r in suite if r.fitness > threshold)


def suite_stats(suite, threshold: float = 0.95, geometry: GeometryConfig = GeometryConfig(),
                with_diversity: bool = True) -> SuiteStats:
    if len(suite) == 0:
        raise EmptySuite("no records")
    fit = np.array([r.fitness for r in suite])
    gen = np.array([r.generation_time for r in suite])
    return SuiteStats(
        executed=len(fit),
        failing=int(np.sum(fit > threshold)),
        mean_fitness_final_80=_tail_mean(fit, 0.8),
        mean_fitness_final_20=_tail_mean(fit, 0.2),
        mean_generation_time=float(gen.mean()),
        sd_generation_time=float(gen.std(ddof=1)) if len(gen) > 1 else 0.0,
        diversity=suite_diversity(suite, threshold, geometry) if with_diversity else None,
    )
