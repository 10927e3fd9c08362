import math

import pytest
from hypothesis import given, settings, strategies as st

from airsweep._validation import ConfigurationError
from airsweep.field import RoomGeometry
from airsweep.presets import default_scenario, experiment_scenario, symmetric_scenario
from airsweep.scenario import (
    ClassroomLayout,
    EmissionEvent,
    FilterPlacement,
    PathParams,
    RobotSpec,
    Scenario,
    cycle_time,
    observer_positions,
    release_offsets,
    robot_pose,
    service_time,
    static_placements,
    sweep_order,
)

LAYOUT = ClassroomLayout(d_x=2.0, d_y=1.5, rows=2, cols=5, seat_origin=(0.55, 1.05))


def test_cycle_times():
    assert cycle_time(10, 1.5, 0.5) == 30.0
    assert cycle_time(12, 1.5, 0.5) == 36.0
    assert cycle_time(14, 1.5, 0.5) == 42.0
    assert cycle_time(1, 1.0, 1.0) == 1.0
    assert service_time(1.5, 0.5) == 3.0


@pytest.mark.parametrize("v", [0.0, -1.0])
def test_nonpositive_speed_rejected(v):
    with pytest.raises(ConfigurationError):
        cycle_time(10, 1.5, v)


def test_release_offsets():
    assert release_offsets(3, 3.0) == [0.0, 3.0, 6.0]
    assert release_offsets(1, 3.0) == [0.0]
    assert max(release_offsets(14, 3.0)) == 39.0


def test_observer_offsets():
    layout = ClassroomLayout(rows=3, cols=3, seat_origin=(0.5, 0.5))
    obs = observer_positions(layout, (1, 1))
    sx, sy = layout.seat_position(1, 1)
    assert obs.missing == ()
    assert obs.positions["FrontCenter"] == (sx + 2.0, sy)
    assert obs.positions["Left"] == (sx, sy - 1.5)
    assert obs.positions["Right"] == (sx, sy + 1.5)
    assert obs.positions["FrontLeft"] == (sx + 2.0, sy - 1.5)
    assert obs.positions["FrontRight"] == (sx + 2.0, sy + 1.5)


def test_single_column_flags_missing_sides():
    layout = ClassroomLayout(rows=2, cols=1)
    obs = observer_positions(layout, (0, 0))
    assert set(obs.positions) == {"FrontCenter"}
    assert set(obs.missing) == {"Left", "Right", "FrontLeft", "FrontRight"}


def test_experiment_layout_observers():
    sc = experiment_scenario()
    obs = observer_positions(sc.layout, sc.source_seat)
    sx, sy = sc.layout.seat_position(*sc.source_seat)
    assert len(obs.positions) == 5
    for label, (dx, dy) in {"FrontCenter": (2.0, 0.0), "FrontLeft": (2.0, -1.5),
                            "Right": (0.0, 1.5)}.items():
        assert obs.positions[label] == pytest.approx((sx + dx, sy + dy), abs=1e-12)


def test_sweep_is_serpentine():
    order = sweep_order(LAYOUT, 10)
    assert order[:5] == [(0, j) for j in range(5)]
    assert order[5:] == [(1, j) for j in reversed(range(5))]
    assert sweep_order(LAYOUT, 3) == [(0, 0), (0, 1), (0, 2)]


def test_pose_in_front_of_source_at_release():
    path = PathParams(0.5, 1.3, 10)
    for t_c in release_offsets(10, 3.0):
        x, y = robot_pose(path, LAYOUT, t_c, t_c, (0, 2))
        sx, sy = LAYOUT.seat_position(0, 2)
        assert math.isclose(x, sx + 1.3) and math.isclose(y, sy)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 500), st.sampled_from([10, 12, 14]), st.integers(0, 9))
def test_pose_is_periodic(t, N, n):
    path = PathParams(0.5, 1.3, N)
    tau = cycle_time(N, 1.5, 0.5)
    t_c = 3.0 * n
    a = robot_pose(path, LAYOUT, t, t_c, (0, 2))
    b = robot_pose(path, LAYOUT, t + tau, t_c, (0, 2))
    if a is None:
        # the slot boundary may round differently one cycle later
        assert b is None or abs(math.fmod(t - t_c + 7.5, 3.0)) < 1e-6
    else:
        assert b is not None
        assert math.isclose(a[0], b[0]) and math.isclose(a[1], b[1], abs_tol=1e-9)


def test_pose_advances_one_pitch_per_service_time():
    path = PathParams(0.5, 1.3, 10)
    t = 1.0
    a = robot_pose(path, LAYOUT, t, 0.0, (0, 0))
    b = robot_pose(path, LAYOUT, t + 3.0, 0.0, (0, 0))
    assert a[0] == b[0]
    assert math.isclose(b[1] - a[1], 1.5)


def test_off_zone_when_N_exceeds_seats():
    layout = ClassroomLayout(rows=1, cols=2, seat_origin=(0.55, 1.05))
    path = PathParams(0.5, 1.0, 5)
    poses = [robot_pose(path, layout, t + 0.5, 0.0, (0, 0)) for t in range(15)]
    off = sum(p is None for p in poses)
    assert off == 9  # 3 of every 5 slots are spent elsewhere


def test_sweep_covers_every_seat():
    path = PathParams(0.5, 1.3, 10)
    fronts = set()
    for k in range(300):
        p = robot_pose(path, LAYOUT, k * 0.1, 0.0, (0, 2))
        if p is not None:
            for seat in LAYOUT.seats():
                sx, sy = LAYOUT.seat_position(*seat)
                if math.isclose(p[0], sx + 1.3) and abs(p[1] - sy) < 0.06:
                    fronts.add(seat)
    assert fronts == set(LAYOUT.seats())


def test_unserviced_source_rejected():
    with pytest.raises(ConfigurationError):
        robot_pose(PathParams(0.5, 1.3, 2), LAYOUT, 0.0, 0.0, (1, 4))


def test_static_placements():
    sp = static_placements(LAYOUT, (0, 2))
    sx, sy = LAYOUT.seat_position(0, 2)
    assert sp.near == (sx + 1.3, sy)
    assert sp.far == (sx + 2.0 + 2.0, sy)


def test_static_far_point_clamped_to_room():
    g = RoomGeometry(3.0, 8.0, 3.5)
    sp = static_placements(LAYOUT, (0, 2), g, margin=0.05)
    assert "far" in sp.clamped and "near" not in sp.clamped
    assert sp.far == (2.95, LAYOUT.seat_position(0, 2)[1])


def test_path_bounds():
    sc = default_scenario()
    with pytest.raises(ConfigurationError):
        sc.with_filter(FilterPlacement.mobile(2.0, 1.0, 10)).__post_init__()
    with pytest.raises(ConfigurationError):
        Scenario(sc.geometry, sc.layout, sc.emissions, FilterPlacement.mobile(0.5, 2.0, 10))
    with pytest.raises(ConfigurationError):
        PathParams(0.5, 1.0, 0)


def test_layout_must_fit_room():
    with pytest.raises(ConfigurationError):
        Scenario(RoomGeometry(3.0, 5.0, 3.5), LAYOUT)


def test_emission_validation():
    with pytest.raises(ConfigurationError):
        Scenario(RoomGeometry(3.0, 8.0, 3.5), LAYOUT, (EmissionEvent((3, 0)),))
    with pytest.raises(ConfigurationError):
        EmissionEvent((0, 0), emission_time=5.0)


def test_static_point_inside_room():
    with pytest.raises(ConfigurationError):
        Scenario(RoomGeometry(3.0, 8.0, 3.5), LAYOUT, filter=FilterPlacement.static((4.0, 1.0)))


def test_robot_k_f():
    assert math.isclose(RobotSpec().k_f(3.5), 0.047 / 0.875)
    assert RobotSpec(flow_Q=0.0).k_f(3.5) == 0.0


def test_mirroring_maps_positions():
    sc = symmetric_scenario(FilterPlacement.static((1.0, 2.0)))
    m = sc.mirrored()
    L = sc.geometry.length
    for seat in sc.layout.seats():
        x, y = sc.layout.seat_position(*seat)
        mx, my = m.layout.seat_position(seat[0], sc.layout.cols - 1 - seat[1])
        assert math.isclose(mx, x) and math.isclose(my, L - y)
    assert m.filter.point == (1.0, L - 2.0)
    obs, mobs = observer_positions(sc.layout, (0, 1)), observer_positions(m.layout, (0, 1))
    assert math.isclose(mobs.positions["Left"][1], L - obs.positions["Right"][1])
    path = PathParams(0.5, 1.3, 6)
    for k in range(40):
        t = 0.7 * k
        a = robot_pose(path, sc.layout, t, 0.0, (0, 1))
        b = robot_pose(path, m.layout, t, 0.0, (0, 1))
        assert (a is None) == (b is None)
        if a is not None:
            assert math.isclose(a[0], b[0]) and math.isclose(a[1], L - b[1])
