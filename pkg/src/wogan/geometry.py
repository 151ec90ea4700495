"""Curvature-encoded roads: integration, spline interpolation and validation."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigError, DegenerateInput

KAPPA_MAX = 0.07

OUT_OF_MAP = "OutOfMap"
SELF_INTERSECTION = "SelfIntersection"
SHARP_TURN = "SharpTurn"
TOO_SHORT = "TooShort"


@dataclass(frozen=True)
class GeometryConfig:
    map_size: float = 200.0
    step_length: float = 15.0
    start_point: tuple[float, float] | None = None  # None -> bottom midpoint
    start_heading: float = math.pi / 2
    samples_per_segment: int = 64
    spacing: float = 1.0
    road_width: float = 8.0
    lane_width: float = 4.0
    # Lateral shift of the driving lane to the right of travel. 0 keeps the
    # SUT left/right symmetric; lane_width / 2 gives right-hand traffic.
    lane_offset: float = 0.0
    kappa_max: float = KAPPA_MAX
    sharpness_factor: float = 1.5

    def __post_init__(self):
        if self.map_size <= 0:
            raise ConfigError("map_size must be positive")
        if self.step_length <= 0:
            raise ConfigError("step_length must be positive")
        if not 0 < self.lane_width <= self.road_width:
            raise ConfigError("lane_width must satisfy 0 < lane_width <= road_width")
        if self.spacing <= 0:
            raise ConfigError("spacing must be positive")
        if self.samples_per_segment < 2:
            raise ConfigError("samples_per_segment must be at least 2")

    @property
    def origin(self) -> np.ndarray:
        if self.start_point is None:
            return np.array([self.map_size / 2, 0.0])
        return np.asarray(self.start_point, dtype=float)

    @property
    def max_turn(self) -> float:
        """Largest heading change allowed between consecutive control segments."""
        return self.kappa_max * self.step_length * self.sharpness_factor


@dataclass(frozen=True)
class RoadPolyline:
    control_points: np.ndarray
    centerline: np.ndarray
    lane_center: np.ndarray
    headings: np.ndarray

    @property
    def length(self) -> float:
        return float(np.sum(np.hypot(*np.diff(self.centerline, axis=0).T)))


@dataclass(frozen=True)
class ValidityReport:
    violations: tuple[str, ...] = field(default_factory=tuple)

    @property
    def valid(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.valid


def curvature_test(kappas: Sequence[float], kappa_max: float = KAPPA_MAX) -> np.ndarray:
    """Return ``kappas`` as a float array after checking the curvature bound."""
    arr = np.asarray(kappas, dtype=float).reshape(-1)
    if arr.size == 0:
        raise DegenerateInput("a test needs at least one curvature")
    if not np.all(np.isfinite(arr)) or np.any(np.abs(arr) > kappa_max + 1e-12):
        raise ValueError(f"curvatures must lie in [-{kappa_max}, {kappa_max}]")
    return arr


def curvature_to_points(kappas: Sequence[float], cfg: GeometryConfig = GeometryConfig()) -> np.ndarray:
    """Integrate curvatures into ``d + 1`` control points.

    Each step first turns by ``kappa * step_length`` and then advances
    ``step_length`` along the new heading.
    """
    kappas = np.asarray(kappas, dtype=float).reshape(-1)
    headings = cfg.start_heading + np.cumsum(kappas * cfg.step_length)
    steps = cfg.step_length * np.column_stack((np.cos(headings), np.sin(headings)))
    points = np.empty((kappas.size + 1, 2))
    points[0] = cfg.origin
    points[1:] = cfg.origin + np.cumsum(steps, axis=0)
    return points


def mirror_points(points: np.ndarray, cfg: GeometryConfig = GeometryConfig()) -> np.ndarray:
    """Reflect points across the vertical line through the start point."""
    out = np.array(points, dtype=float)
    out[:, 0] = 2 * cfg.origin[0] - out[:, 0]
    return out


def _dedupe(points: np.ndarray) -> np.ndarray:
    keep = np.ones(len(points), dtype=bool)
    keep[1:] = np.any(np.diff(points, axis=0) != 0, axis=1)
    return points[keep]


def _catmull_rom(p0, p1, p2, p3, t: np.ndarray) -> np.ndarray:
    """Centripetal Catmull-Rom on the segment p1 -> p2 at local params ``t`` in [0, 1]."""
    t0 = 0.0
    t1 = t0 + math.sqrt(math.hypot(*(p1 - p0)))
    t2 = t1 + math.sqrt(math.hypot(*(p2 - p1)))
    t3 = t2 + math.sqrt(math.hypot(*(p3 - p2)))
    tt = (t1 + t * (t2 - t1))[:, None]
    # Barry-Goldman pyramid.
    a1 = (t1 - tt) / (t1 - t0) * p0 + (tt - t0) / (t1 - t0) * p1
    a2 = (t2 - tt) / (t2 - t1) * p1 + (tt - t1) / (t2 - t1) * p2
    a3 = (t3 - tt) / (t3 - t2) * p2 + (tt - t2) / (t3 - t2) * p3
    b1 = (t2 - tt) / (t2 - t0) * a1 + (tt - t0) / (t2 - t0) * a2
    b2 = (t3 - tt) / (t3 - t1) * a2 + (tt - t1) / (t3 - t1) * a3
    return (t2 - tt) / (t2 - t1) * b1 + (tt - t1) / (t2 - t1) * b2


def _rotate(v: np.ndarray, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])


def _turn(a: np.ndarray, b: np.ndarray) -> float:
    """Signed angle from direction ``a`` to direction ``b``."""
    return math.atan2(a[0] * b[1] - a[1] * b[0], a @ b)


def _phantom_ends(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Extra end points that continue the turn of the neighbouring vertex.

    Repeating the first (last) turn angle puts the phantoms of a constant
    curvature road on the same circle; a straight road gets plain reflections.
    """
    d0, d_last = pts[1] - pts[0], pts[-1] - pts[-2]
    if len(pts) > 2:
        first, last = _turn(d0, pts[2] - pts[1]), _turn(pts[-2] - pts[-3], d_last)
    else:
        first = last = 0.0
    return pts[0] - _rotate(d0, -first), pts[-1] + _rotate(d_last, last)


def _tangent_headings(line: np.ndarray) -> np.ndarray:
    d = np.empty_like(line)
    d[1:-1] = line[2:] - line[:-2]
    d[0] = line[1] - line[0]
    d[-1] = line[-1] - line[-2]
    return np.unwrap(np.arctan2(d[:, 1], d[:, 0]))


def interpolate_polyline(points, cfg: GeometryConfig = GeometryConfig()) -> RoadPolyline:
    """Spline the control points into a centerline with roughly ``cfg.spacing`` between samples.

    The spline passes exactly through every control point. Samples inside a
    segment are spread evenly in arc length.
    """
    ctrl = np.asarray(points, dtype=float)
    if ctrl.ndim != 2 or ctrl.shape[1] != 2:
        raise DegenerateInput("points must have shape (n, 2)")
    pts = _dedupe(ctrl)
    if len(pts) < 2:
        raise DegenerateInput("need at least 2 distinct points")

    head, tail = _phantom_ends(pts)
    ext = np.vstack((head, pts, tail))
    dense_t = np.linspace(0.0, 1.0, cfg.samples_per_segment)
    pieces = []
    for i in range(len(pts) - 1):
        p0, p1, p2, p3 = ext[i], ext[i + 1], ext[i + 2], ext[i + 3]
        dense = _catmull_rom(p0, p1, p2, p3, dense_t)
        s = np.concatenate(([0.0], np.cumsum(np.hypot(*np.diff(dense, axis=0).T))))
        n = max(1, math.ceil(s[-1] / cfg.spacing - 1e-9))
        targets = np.linspace(0.0, s[-1], n + 1)[:-1]
        t = np.interp(targets, s, dense_t)
        seg = _catmull_rom(p0, p1, p2, p3, t)
        seg[0] = p1
        pieces.append(seg)
    pieces.append(pts[-1:])
    centerline = np.vstack(pieces)

    headings = _tangent_headings(centerline)
    if cfg.lane_offset:
        right = np.column_stack((np.sin(headings), -np.cos(headings)))
        lane_center = centerline + cfg.lane_offset * right
    else:
        lane_center = centerline.copy()
    return RoadPolyline(ctrl, centerline, lane_center, headings)


def road_from_test(kappas, cfg: GeometryConfig = GeometryConfig()) -> RoadPolyline:
    return interpolate_polyline(curvature_to_points(kappas, cfg), cfg)


def _segment_distances(a0, a1, b0, b1) -> np.ndarray:
    """Vectorized minimum distance between 2D segments a0-a1 and b0-b1."""

    def point_seg(p, s0, s1):
        d = s1 - s0
        dd = np.einsum("ij,ij->i", d, d)
        t = np.einsum("ij,ij->i", p - s0, d) / np.where(dd > 0, dd, 1.0)
        t = np.clip(t, 0.0, 1.0)
        proj = s0 + t[:, None] * d
        return np.hypot(*(p - proj).T)

    def cross(u, v):
        return u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]

    d1 = cross(a1 - a0, b0 - a0)
    d2 = cross(a1 - a0, b1 - a0)
    d3 = cross(b1 - b0, a0 - b0)
    d4 = cross(b1 - b0, a1 - b0)
    crossing = (d1 * d2 < 0) & (d3 * d4 < 0)
    dist = np.minimum.reduce(
        [point_seg(a0, b0, b1), point_seg(a1, b0, b1), point_seg(b0, a0, a1), point_seg(b1, a0, a1)]
    )
    return np.where(crossing, 0.0, dist)


def _self_intersects(line: np.ndarray, clearance: float, min_gap: float) -> bool:
    seg_len = np.hypot(*np.diff(line, axis=0).T)
    cum = np.concatenate(([0.0], np.cumsum(seg_len)))
    n = len(seg_len)
    if n < 2:
        return False
    # Segments closer than ``clearance`` have vertices closer than clearance + longest segment.
    pairs = cKDTree(line).query_pairs(clearance + float(seg_len.max()), output_type="ndarray")
    if pairs.size == 0:
        return False
    i = np.minimum(pairs[:, 0], pairs[:, 1])
    j = np.maximum(pairs[:, 0], pairs[:, 1])
    # Map vertex pairs to every segment touching them.
    si = np.concatenate((i - 1, i, i - 1, i))
    sj = np.concatenate((j - 1, j - 1, j, j))
    ok = (si >= 0) & (sj < n) & (si < n) & (sj >= 0)
    si, sj = si[ok], sj[ok]
    keys = np.unique(np.minimum(si, sj) * n + np.maximum(si, sj))
    si, sj = keys // n, keys % n
    # Only segments far apart along the road; nearby ones are close by construction.
    far = (sj >= si + 2) & ((cum[sj] - cum[si + 1]) > min_gap)
    si, sj = si[far], sj[far]
    if si.size == 0:
        return False
    dist = _segment_distances(line[si], line[si + 1], line[sj], line[sj + 1])
    return bool(np.any(dist < clearance))


def _sharp_turn(control_points: np.ndarray, max_turn: float) -> bool:
    ctrl = _dedupe(np.asarray(control_points, dtype=float))
    if len(ctrl) < 3:
        return False
    seg = np.diff(ctrl, axis=0)
    ang = np.arctan2(seg[:, 1], seg[:, 0])
    turn = np.abs((np.diff(ang) + np.pi) % (2 * np.pi) - np.pi)
    return bool(np.any(turn > max_turn + 1e-9))


def validate_road(road: RoadPolyline, cfg: GeometryConfig = GeometryConfig()) -> ValidityReport:
    """Check a road against the map, sharpness, self-intersection and length rules."""
    violations = []
    line = road.centerline
    tol = 1e-9
    if np.any(line < -tol) or np.any(line > cfg.map_size + tol):
        violations.append(OUT_OF_MAP)

    if _sharp_turn(road.control_points, cfg.max_turn):
        violations.append(SHARP_TURN)

    if _self_intersects(line, cfg.road_width, math.pi * cfg.road_width / 2):
        violations.append(SELF_INTERSECTION)

    if road.length < 2 * cfg.step_length - tol:
        violations.append(TOO_SHORT)
    return ValidityReport(tuple(violations))


def as_points(test, cfg: GeometryConfig = GeometryConfig()) -> np.ndarray:
    """Control points for either a curvature vector (1-D) or a point list (n x 2)."""
    arr = np.asarray(test, dtype=float)
    if arr.ndim == 2:
        return arr
    return curvature_to_points(arr, cfg)


def check_test(test, cfg: GeometryConfig = GeometryConfig()) -> tuple[RoadPolyline | None, ValidityReport]:
    """Build and validate the road for ``test``; the road is ``None`` if it is degenerate."""
    try:
        road = interpolate_polyline(as_points(test, cfg), cfg)
    except DegenerateInput:
        return None, ValidityReport((TOO_SHORT,))
    return road, validate_road(road, cfg)


def is_valid(test, cfg: GeometryConfig = GeometryConfig()) -> bool:
    """Boolean validity with the cheap control-point checks first."""
    points = as_points(test, cfg)
    if _sharp_turn(points, cfg.max_turn):
        return False
    try:
        road = interpolate_polyline(points, cfg)
    except DegenerateInput:
        return False
    return validate_road(road, cfg).valid


def validity_rate(
    sampler: Callable[[np.random.Generator], np.ndarray],
    n: int,
    cfg: GeometryConfig = GeometryConfig(),
    rng: np.random.Generator | None = None,
) -> float:
    """Fraction of ``n`` samples from ``sampler(rng)`` whose road validates."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng() if rng is None else rng
    return sum(is_valid(sampler(rng), cfg) for _ in range(n)) / n


def uniform_points_sampler(n_points: int = 6, map_size: float = 200.0):
    """Sampler of ``n_points`` plane points uniform in the map square."""

    def sample(rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(0.0, map_size, size=(n_points, 2))

    return sample


def road_to_json(kappas, road: RoadPolyline) -> str:
    return json.dumps(
        {
            "kappas": [float(k) for k in np.asarray(kappas).reshape(-1)],
            "control_points": road.control_points.tolist(),
            "centerline": road.centerline.tolist(),
        }
    )
