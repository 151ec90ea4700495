import math

import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st
from shapely.geometry import Polygon

from wogan.errors import ConfigError, EndOfRoad, InvalidRoad
from wogan.geometry import GeometryConfig, interpolate_polyline, road_from_test
from wogan.sut import (
    MockSUT,
    SimConfig,
    VehicleState,
    _clip,
    bolp,
    car_footprint,
    controller_step,
    polygon_area,
    simulate,
    vehicle_step,
    write_trace_csv,
)

CFG = SimConfig()
GEO = GeometryConfig()
STRAIGHT = road_from_test([0] * 5)


def aligned(dx, y=30.0):
    return VehicleState(100.0 + dx, y, math.pi / 2)


# -- clipping and footprint -------------------------------------------------

@given(st.floats(-8, 8), st.floats(-8, 8), st.floats(-math.pi, math.pi),
       st.lists(st.tuples(st.floats(-10, 10), st.floats(-10, 10)), min_size=3, max_size=8))
@settings(max_examples=150, deadline=None)
def test_clip_area_matches_shapely(x, y, h, pts):
    car = car_footprint(x, y, h, CFG)
    subject = Polygon(pts)
    if not subject.is_valid or subject.area < 1e-6:
        return
    ring = list(subject.exterior.coords)[:-1]
    expected = subject.intersection(Polygon(car)).area
    assert polygon_area(_clip(ring, car)) == pytest.approx(expected, abs=1e-9)


def test_footprint_area_and_orientation():
    car = car_footprint(3.0, -2.0, 0.7, CFG)
    assert polygon_area(car) == pytest.approx(CFG.car_length * CFG.car_width)
    assert Polygon(car).exterior.is_ccw


# -- BOLP -------------------------------------------------------------------

def test_bolp_centered_is_zero():
    assert bolp(aligned(0.0), STRAIGHT) == pytest.approx(0.0, abs=1e-12)


def test_bolp_fully_outside_is_one():
    assert bolp(aligned(GEO.lane_width / 2 + CFG.car_width), STRAIGHT) == pytest.approx(1.0)


def test_bolp_on_boundary_is_half():
    assert bolp(aligned(GEO.lane_width / 2), STRAIGHT) == pytest.approx(0.5, abs=1e-9)
    assert bolp(aligned(-GEO.lane_width / 2), STRAIGHT) == pytest.approx(0.5, abs=1e-9)


def test_bolp_lateral_offset_closed_form_and_monotone():
    offsets = np.linspace(0, 6, 61)
    values = [bolp(aligned(d), STRAIGHT) for d in offsets]
    half_lane, half_car = GEO.lane_width / 2, CFG.car_width / 2
    expected = np.clip((offsets + half_car - half_lane) / CFG.car_width, 0, 1)
    np.testing.assert_allclose(values, expected, atol=1e-9)
    assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))


# -- controller -------------------------------------------------------------

def test_controller_zero_on_straight_center():
    assert controller_step(aligned(0.0, 10.0), STRAIGHT) == 0.0


def test_controller_steers_back_toward_lane():
    # Right of the lane (x larger while heading north): steer left, i.e. positive.
    cmd = controller_step(aligned(1.0, 10.0), STRAIGHT)
    assert 0 < cmd <= CFG.max_steer_rate * CFG.dt + 1e-12


def test_controller_arc_matches_pure_pursuit_geometry():
    # Pure pursuit on a circle of radius R: the chord to the lookahead point subtends
    # L / R, so the commanded curvature is exactly 1 / R.
    r = 50.0
    ang = np.linspace(0, 1.4, 40)
    pts = np.column_stack((100 - r + r * np.cos(ang), 20 + r * np.sin(ang)))
    road = interpolate_polyline(pts)
    expected = math.atan(CFG.wheelbase / r)
    a = 0.2
    state = VehicleState(100 - r + r * math.cos(a), 20 + r * math.sin(a), a + math.pi / 2, expected)
    assert controller_step(state, road) == pytest.approx(expected, abs=2e-3)


def test_controller_rate_limit_and_clamp():
    cfg = SimConfig(max_steer_rate=100.0)
    cmd = controller_step(aligned(1.9, 10.0), STRAIGHT, cfg)
    assert abs(cmd) <= cfg.max_steer


def test_controller_end_of_road():
    with pytest.raises(EndOfRoad):
        controller_step(aligned(0.0, 74.0), STRAIGHT)


# -- vehicle ----------------------------------------------------------------

def test_vehicle_straight_advance():
    s = vehicle_step(VehicleState(1.0, 2.0, 0.3), 0.0)
    assert s.x == pytest.approx(1.0 + CFG.speed * CFG.dt * math.cos(0.3))
    assert s.y == pytest.approx(2.0 + CFG.speed * CFG.dt * math.sin(0.3))
    assert s.heading == 0.3 and s.steering == 0.0


def _circle_error(dt: float, steer: float = 0.2) -> float:
    cfg = SimConfig(dt=dt)
    state = VehicleState(0.0, 0.0, 0.0, steer, cfg.speed)
    pts = []
    for _ in range(int(round(3.0 / dt))):
        state = vehicle_step(state, steer, cfg)
        pts.append(state.position)
    pts = np.array(pts)
    r = cfg.wheelbase / math.tan(steer)
    return float(np.max(np.abs(np.hypot(pts[:, 0], pts[:, 1] - r) - r)))


def test_vehicle_constant_steering_circle():
    coarse, fine = _circle_error(0.05), _circle_error(0.005)
    assert coarse < 0.5
    assert fine < coarse / 5


def test_sim_config_rejects_bad_values():
    with pytest.raises(ConfigError):
        SimConfig(dt=0)
    with pytest.raises(ConfigError):
        SimConfig(dt=0.2)
    with pytest.raises(ConfigError):
        SimConfig(lookahead=2.0)


# -- simulation -------------------------------------------------------------

def test_straight_road_passes():
    res = simulate(STRAIGHT)
    assert res.fitness < 0.05 and res.completed
    assert res.fitness == res.bolp_trace.max()
    assert len(res.pose_trace) == len(res.bolp_trace) == len(res.times)


def test_sharp_road_fails():
    res = MockSUT()([-0.07, 0.07, 0.07, 0.07, 0.07])
    assert res.fitness > 0.5
    assert np.all((res.bolp_trace >= 0) & (res.bolp_trace <= 1))


def test_invalid_road_raises():
    with pytest.raises(InvalidRoad):
        simulate(road_from_test([0.07] * 7))


def test_simulate_deterministic():
    a = MockSUT()([0.03, -0.05, 0.06, 0.0, -0.02])
    b = MockSUT()([0.03, -0.05, 0.06, 0.0, -0.02])
    np.testing.assert_array_equal(a.bolp_trace, b.bolp_trace)
    assert a.fitness == b.fitness


@given(st.lists(st.floats(-0.07, 0.07), min_size=5, max_size=5))
@example([0.0625, 0.0, 0.0, 0.0, 0.0])  # lookahead lands exactly on the road end
@settings(max_examples=15, deadline=None)
def test_mirror_equivariance(ks):
    from wogan.geometry import is_valid

    if not is_valid(ks):
        return
    a = MockSUT()(ks)
    b = MockSUT()([-k for k in ks])
    np.testing.assert_allclose(a.bolp_trace, b.bolp_trace, atol=1e-6)


def test_timeout_marks_incomplete():
    res = simulate(STRAIGHT, SimConfig(max_sim_time=1.0))
    assert not res.completed
    assert res.sim_time == pytest.approx(1.0)


def test_trace_csv(tmp_path):
    res = simulate(STRAIGHT)
    path = tmp_path / "trace.csv"
    write_trace_csv(res, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,x,y,heading,steering,bolp"
    assert len(lines) - 1 == len(res.pose_trace)
