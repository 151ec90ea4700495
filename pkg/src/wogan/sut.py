"""Deterministic lane-keeping SUT: kinematic bicycle + pure pursuit + footprint BOLP."""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, EndOfRoad, InvalidRoad
from .geometry import GeometryConfig, RoadPolyline, road_from_test, validate_road


@dataclass(frozen=True)
class SimConfig:
    wheelbase: float = 2.7
    car_length: float = 4.5
    car_width: float = 1.8
    speed: float = 12.0
    # Calibrated so ~3% of uniform random valid tests exceed BOLP 0.95
    # (see ``wogan calibrate``). The steering limit allows a turn radius of about
    # 16 against the road's tightest 15, and the lookahead cuts corners.
    lookahead: float = 12.0
    max_steer: float = 0.165
    max_steer_rate: float = 1.0
    dt: float = 0.05
    max_sim_time: float = 60.0

    def __post_init__(self):
        for name in ("wheelbase", "car_length", "car_width", "speed", "lookahead",
                     "max_steer", "max_steer_rate", "dt", "max_sim_time"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.dt > 0.1:
            raise ConfigError("dt must be at most 0.1")
        if self.lookahead <= self.wheelbase:
            raise ConfigError("lookahead must exceed wheelbase")


@dataclass(frozen=True)
class VehicleState:
    x: float
    y: float
    heading: float
    steering: float = 0.0
    speed: float = 0.0

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass
class ExecutionResult:
    fitness: float
    bolp_trace: np.ndarray
    pose_trace: list[VehicleState]
    wall_time: float
    completed: bool
    sim_time: float = 0.0
    times: np.ndarray = field(default_factory=lambda: np.zeros(0))


# ---------------------------------------------------------------------------
# polygon clipping

def _clip(subject: list[tuple[float, float]], clip_ccw: list[tuple[float, float]]):
    """Sutherland-Hodgman: clip any simple polygon by a convex counter-clockwise one."""
    out = subject
    cx0, cy0 = clip_ccw[-1]
    for cx1, cy1 in clip_ccw:
        if not out:
            break
        ex, ey = cx1 - cx0, cy1 - cy0
        inp, out = out, []
        sx, sy = inp[-1]
        s_side = ex * (sy - cy0) - ey * (sx - cx0)
        for px, py in inp:
            p_side = ex * (py - cy0) - ey * (px - cx0)
            if p_side >= 0:
                if s_side < 0:
                    t = s_side / (s_side - p_side)
                    out.append((sx + t * (px - sx), sy + t * (py - sy)))
                out.append((px, py))
            elif s_side >= 0:
                t = s_side / (s_side - p_side)
                out.append((sx + t * (px - sx), sy + t * (py - sy)))
            sx, sy, s_side = px, py, p_side
        cx0, cy0 = cx1, cy1
    return out


def polygon_area(poly) -> float:
    n = len(poly)
    if n < 3:
        return 0.0
    acc = 0.0
    x0, y0 = poly[-1]
    for x1, y1 in poly:
        acc += x0 * y1 - x1 * y0
        x0, y0 = x1, y1
    return abs(acc) / 2


def car_footprint(x: float, y: float, heading: float, cfg: SimConfig) -> list[tuple[float, float]]:
    """Counter-clockwise corners of the car rectangle centred on (x, y)."""
    c, s = math.cos(heading), math.sin(heading)
    hl, hw = cfg.car_length / 2, cfg.car_width / 2
    return [
        (x - hl * c + hw * s, y - hl * s - hw * c),  # rear right
        (x + hl * c + hw * s, y + hl * s - hw * c),  # front right
        (x + hl * c - hw * s, y + hl * s + hw * c),  # front left
        (x - hl * c - hw * s, y - hl * s + hw * c),  # rear left
    ]


# ---------------------------------------------------------------------------
# lane model

class Lane:
    """Driving lane of a road, extended straight past both ends by ``extension``."""

    def __init__(self, road: RoadPolyline, lane_width: float, extension: float = 0.0):
        center = np.asarray(road.lane_center, dtype=float)
        self.center = center
        seg = np.diff(center, axis=0)
        self.seg_len = np.hypot(seg[:, 0], seg[:, 1])
        self.s = np.concatenate(([0.0], np.cumsum(self.seg_len)))
        self.length = float(self.s[-1])
        self.half_width = lane_width / 2

        head = seg[0] / self.seg_len[0]
        tail = seg[-1] / self.seg_len[-1]
        ext = np.vstack((center[0] - extension * head, center, center[-1] + extension * tail))
        inner = np.empty_like(center)
        inner[1:-1] = center[2:] - center[:-2]
        inner[0], inner[-1] = head, tail
        inner /= np.hypot(inner[:, 0], inner[:, 1])[:, None]
        tangents = np.vstack((head, inner, tail))
        normal = np.column_stack((-tangents[:, 1], tangents[:, 0]))
        self.left = ext + self.half_width * normal
        self.right = ext - self.half_width * normal
        self.ext_s = np.concatenate(([-extension], self.s, [self.length + extension]))

    def project(self, p: np.ndarray, lo: float = -math.inf, hi: float = math.inf) -> float:
        """Arc position of the closest lane-center point, searching segments within [lo, hi]."""
        idx = np.nonzero((self.s[1:] >= lo) & (self.s[:-1] <= hi))[0]
        if idx.size == 0:
            idx = np.arange(len(self.seg_len))
        a = self.center[idx]
        d = self.center[idx + 1] - a
        ln = self.seg_len[idx]
        t = np.clip(np.einsum("ij,ij->i", p - a, d) / (ln * ln), 0.0, 1.0)
        proj = a + t[:, None] * d
        dist2 = np.einsum("ij,ij->i", p - proj, p - proj)
        k = int(np.argmin(dist2))
        return float(self.s[idx[k]] + t[k] * ln[k])

    def point_at(self, s: float) -> np.ndarray:
        return np.array([np.interp(s, self.s, self.center[:, 0]), np.interp(s, self.s, self.center[:, 1])])

    def window(self, s: float, radius: float) -> list[tuple[float, float]]:
        """Lane polygon between arc positions s - radius and s + radius."""
        lo = max(0, int(np.searchsorted(self.ext_s, s - radius, side="right")) - 1)
        hi = min(len(self.ext_s) - 1, int(np.searchsorted(self.ext_s, s + radius, side="left")))
        left = self.left[lo:hi + 1]
        right = self.right[lo:hi + 1][::-1]
        return [tuple(p) for p in left.tolist()] + [tuple(p) for p in right.tolist()]


def _bolp_on_lane(state: VehicleState, lane: Lane, cfg: SimConfig, s_hint: float | None = None) -> float:
    car = car_footprint(state.x, state.y, state.heading, cfg)
    reach = math.hypot(cfg.car_length, cfg.car_width) / 2
    if s_hint is None:
        s_near = lane.project(state.position)
    else:
        s_near = lane.project(state.position, s_hint - 2 * reach - 5, s_hint + 2 * reach + 5)
    poly = lane.window(s_near, reach + lane.half_width + 2.0)
    inside = polygon_area(_clip(poly, car))
    out = 1.0 - inside / (cfg.car_length * cfg.car_width)
    return min(1.0, max(0.0, out))


def bolp(state: VehicleState, road: RoadPolyline, cfg: SimConfig = SimConfig(),
         geometry: GeometryConfig = GeometryConfig()) -> float:
    """Fraction of the car footprint outside the driving lane."""
    lane = Lane(road, geometry.lane_width, extension=cfg.car_length)
    return _bolp_on_lane(state, lane, cfg)


# ---------------------------------------------------------------------------
# controller and vehicle

END_TOLERANCE = 1e-6


def _pure_pursuit(state: VehicleState, lane: Lane, cfg: SimConfig, s_hint: float | None) -> tuple[float, float]:
    p = state.position
    if s_hint is None:
        s_near = lane.project(p)
    else:
        s_near = lane.project(p, s_hint - cfg.lookahead, s_hint + 2 * cfg.lookahead)
    s_target = s_near + cfg.lookahead
    # Straight runs advance by exactly speed * dt, so the lookahead can land on the
    # road end up to rounding; the tolerance keeps mirrored roads on the same branch.
    if s_target > lane.length + END_TOLERANCE:
        raise EndOfRoad()
    target = lane.point_at(s_target)
    dx, dy = target[0] - state.x, target[1] - state.y
    dist = math.hypot(dx, dy)
    alpha = math.atan2(dy, dx) - state.heading
    alpha = (alpha + math.pi) % (2 * math.pi) - math.pi
    curvature = 2.0 * math.sin(alpha) / max(dist, 1e-9)
    cmd = math.atan(cfg.wheelbase * curvature)
    cmd = min(cfg.max_steer, max(-cfg.max_steer, cmd))
    max_delta = cfg.max_steer_rate * cfg.dt
    cmd = min(state.steering + max_delta, max(state.steering - max_delta, cmd))
    return cmd, s_near


def controller_step(state: VehicleState, road: RoadPolyline, cfg: SimConfig = SimConfig(),
                    geometry: GeometryConfig = GeometryConfig()) -> float:
    """Pure-pursuit steering command; raises :class:`EndOfRoad` when no lookahead point is left."""
    lane = Lane(road, geometry.lane_width)
    return _pure_pursuit(state, lane, cfg, None)[0]


def vehicle_step(state: VehicleState, steering: float, cfg: SimConfig = SimConfig()) -> VehicleState:
    heading = state.heading + cfg.speed / cfg.wheelbase * math.tan(steering) * cfg.dt
    return VehicleState(
        state.x + cfg.speed * cfg.dt * math.cos(heading),
        state.y + cfg.speed * cfg.dt * math.sin(heading),
        heading,
        steering,
        cfg.speed,
    )


def simulate(road: RoadPolyline, cfg: SimConfig = SimConfig(),
             geometry: GeometryConfig = GeometryConfig()) -> ExecutionResult:
    """Drive the road once and report the maximum BOLP as fitness."""
    report = validate_road(road, geometry)
    if not report.valid:
        raise InvalidRoad(report.violations)
    start = time.perf_counter()
    lane = Lane(road, geometry.lane_width, extension=cfg.car_length)
    c0, c1 = lane.center[0], lane.center[1]
    state = VehicleState(float(c0[0]), float(c0[1]), math.atan2(c1[1] - c0[1], c1[0] - c0[0]), 0.0, cfg.speed)

    poses = [state]
    hints = [0.0]
    completed = False
    n_steps = int(round(cfg.max_sim_time / cfg.dt))
    s_hint = 0.0
    for _ in range(n_steps):
        try:
            steer, s_hint = _pure_pursuit(state, lane, cfg, s_hint)
        except EndOfRoad:
            completed = True
            break
        state = vehicle_step(state, steer, cfg)
        poses.append(state)
        hints.append(s_hint)
    trace = np.array([_bolp_on_lane(st, lane, cfg, h) for st, h in zip(poses, hints)])
    times = cfg.dt * np.arange(len(poses))
    return ExecutionResult(
        fitness=float(trace.max()),
        bolp_trace=trace,
        pose_trace=poses,
        wall_time=time.perf_counter() - start,
        completed=completed,
        sim_time=float(times[-1]),
        times=times,
    )


class MockSUT:
    """Callable ``kappas -> ExecutionResult`` bundling geometry and simulator settings."""

    def __init__(self, sim: SimConfig = SimConfig(), geometry: GeometryConfig = GeometryConfig()):
        self.sim = sim
        self.geometry = geometry

    def __call__(self, kappas) -> ExecutionResult:
        return simulate(road_from_test(kappas, self.geometry), self.sim, self.geometry)


def write_trace_csv(result: ExecutionResult, path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "x", "y", "heading", "steering", "bolp"])
        for t, st, b in zip(result.times, result.pose_trace, result.bolp_trace):
            writer.writerow([f"{t:.6g}", repr(st.x), repr(st.y), repr(st.heading), repr(st.steering), repr(float(b))])
