"""Classroom seating, robot patrol path, filter placements and emission events.

Coordinates: ``x`` is the facing direction (along the room width, grid axis 0)
and ``y`` the lateral direction (along the room length, grid axis 1). Rows of
seats share an ``x``; columns share a ``y``. Row 0 is the rearmost row.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field, replace

import numpy as np

from ._validation import (
    ConfigurationError,
    check_nonnegative,
    check_point,
    check_positive,
    check_positive_int,
)
from .field import CellSet, DiffusionParams, RoomGeometry, filter_fraction, rectangle_cells
from .plume import (
    AirParams,
    CoughSpec,
    SourceSeries,
    VirologyParams,
    emission_seeds,
    generate_source_series,
)

OBSERVER_OFFSETS = {
    "Left": (0, -1),
    "Right": (0, 1),
    "FrontCenter": (1, 0),
    "FrontLeft": (1, -1),
    "FrontRight": (1, 1),
}
OBSERVER_LABELS = tuple(OBSERVER_OFFSETS)

NEAR_STATIC_OFFSET = 1.3
FAR_STATIC_OFFSET = 2.0


@dataclass(frozen=True)
class ClassroomLayout:
    """Seats on a ``rows x cols`` grid with pitch ``(d_x, d_y)``, all facing ``+x``.

    ``sweep_direction`` is the lateral direction (+1 or -1) the robot takes
    along row 0; it alternates on later rows.
    """

    d_x: float = 2.0
    d_y: float = 1.5
    rows: int = 2
    cols: int = 5
    seat_origin: tuple[float, float] = (0.55, 1.05)
    sweep_direction: int = 1

    def __post_init__(self):
        check_positive(self.d_x, "d_x")
        check_positive(self.d_y, "d_y")
        check_positive_int(self.rows, "rows")
        check_positive_int(self.cols, "cols")
        object.__setattr__(self, "seat_origin", tuple(check_point(self.seat_origin, "seat_origin")))
        if self.sweep_direction not in (1, -1):
            raise ConfigurationError("sweep_direction must be +1 or -1")

    @property
    def seat_count(self) -> int:
        return self.rows * self.cols

    def has_seat(self, row: int, col: int) -> bool:
        return 0 <= row < self.rows and 0 <= col < self.cols

    def seat_position(self, row: int, col: int) -> tuple[float, float]:
        if not self.has_seat(row, col):
            raise ConfigurationError(f"seat ({row}, {col}) is not in a {self.rows}x{self.cols} layout")
        return (self.seat_origin[0] + row * self.d_x, self.seat_origin[1] + col * self.d_y)

    def seats(self) -> list[tuple[int, int]]:
        return [(i, j) for i in range(self.rows) for j in range(self.cols)]

    def centroid(self) -> tuple[float, float]:
        pts = np.array([self.seat_position(*s) for s in self.seats()])
        return tuple(pts.mean(axis=0))

    def check_inside(self, geometry: RoomGeometry) -> None:
        for seat in self.seats():
            if not geometry.contains(self.seat_position(*seat)):
                raise ConfigurationError(f"seat {seat} at {self.seat_position(*seat)} is outside the room")

    def mirrored(self, geometry: RoomGeometry) -> "ClassroomLayout":
        """Layout reflected about the room's lateral centerline ``y = length/2``."""
        far = self.seat_origin[1] + (self.cols - 1) * self.d_y
        return replace(
            self,
            seat_origin=(self.seat_origin[0], geometry.length - far),
            sweep_direction=-self.sweep_direction,
        )


@dataclass(frozen=True)
class PathParams:
    """Row-sweep patrol: speed ``v`` (m/s), passing distance ``r`` (m), ``N`` people per cycle."""

    v: float
    r: float
    N: int

    def __post_init__(self):
        check_positive(self.v, "v")
        check_positive(self.r, "r")
        check_positive_int(self.N, "N")

    def check_bounds(self, layout: ClassroomLayout, v_max: float) -> None:
        if not (0.0 < self.v <= v_max):
            raise ConfigurationError(f"v={self.v} outside (0, {v_max}]")
        if not (0.0 < self.r < layout.d_x):
            raise ConfigurationError(f"r={self.r} outside (0, {layout.d_x})")


@dataclass(frozen=True)
class FilterPlacement:
    """Where the filter is: on the patrolling robot, parked at a point, or absent."""

    variant: str = "none"
    path: PathParams | None = None
    point: tuple[float, float] | None = None

    def __post_init__(self):
        if self.variant not in ("mobile", "static", "none"):
            raise ConfigurationError(f"unknown filter variant {self.variant!r}")
        if self.variant == "mobile" and self.path is None:
            raise ConfigurationError("mobile filter needs path parameters")
        if self.variant == "static":
            if self.point is None:
                raise ConfigurationError("static filter needs a point")
            object.__setattr__(self, "point", tuple(check_point(self.point, "static point")))

    @classmethod
    def mobile(cls, v: float, r: float, N: int) -> "FilterPlacement":
        return cls("mobile", path=PathParams(v, r, N))

    @classmethod
    def static(cls, point) -> "FilterPlacement":
        return cls("static", point=tuple(point))

    @classmethod
    def none(cls) -> "FilterPlacement":
        return cls("none")


@dataclass(frozen=True)
class EmissionEvent:
    """A cough from ``source_seat`` at ``emission_time`` (only t=0 is supported)."""

    source_seat: tuple[int, int] = (0, 2)
    emission_time: float = 0.0
    spec: CoughSpec = dc_field(default_factory=CoughSpec)

    def __post_init__(self):
        object.__setattr__(self, "source_seat", tuple(int(c) for c in self.source_seat))
        if self.emission_time != 0.0:
            raise ConfigurationError("emissions are aligned to t=0; emission_time must be 0")


@dataclass(frozen=True)
class RobotSpec:
    """Filter-carrying robot: rectangular footprint (m) and filter flow (m^3/s)."""

    footprint_w: float = 0.5
    footprint_l: float = 0.5
    flow_Q: float = 0.047
    v_max: float = 1.5

    def __post_init__(self):
        check_positive(self.footprint_w, "footprint_w")
        check_positive(self.footprint_l, "footprint_l")
        check_nonnegative(self.flow_Q, "flow_Q")
        check_positive(self.v_max, "v_max")

    def column_volume(self, height: float) -> float:
        return self.footprint_w * self.footprint_l * height

    def k_f(self, height: float, dt: float = 1.0) -> float:
        return filter_fraction(self.flow_Q, dt, self.column_volume(height))[0]

    def footprint(self, geometry: RoomGeometry, center) -> CellSet:
        return rectangle_cells(geometry, center, self.footprint_w, self.footprint_l)


@dataclass(frozen=True)
class Scenario:
    geometry: RoomGeometry
    layout: ClassroomLayout = dc_field(default_factory=ClassroomLayout)
    emissions: tuple[EmissionEvent, ...] = ()
    filter: FilterPlacement = dc_field(default_factory=FilterPlacement.none)
    diffusion: DiffusionParams = dc_field(default_factory=DiffusionParams)
    robot: RobotSpec = dc_field(default_factory=RobotSpec)
    horizon: int = 600

    def __post_init__(self):
        object.__setattr__(self, "emissions", tuple(self.emissions))
        check_positive_int(self.horizon, "horizon")
        self.layout.check_inside(self.geometry)
        for ev in self.emissions:
            if not self.layout.has_seat(*ev.source_seat):
                raise ConfigurationError(f"emission seat {ev.source_seat} is not in the layout")
        if self.filter.variant == "static" and not self.geometry.contains(self.filter.point):
            raise ConfigurationError(f"static filter point {self.filter.point} is outside the room")
        if self.filter.variant == "mobile":
            self.filter.path.check_bounds(self.layout, self.robot.v_max)

    @property
    def source_seat(self) -> tuple[int, int]:
        """Seat of the first emission; observers and the patrol phase refer to it."""
        if not self.emissions:
            return (0, 0)
        return self.emissions[0].source_seat

    def with_filter(self, placement: FilterPlacement) -> "Scenario":
        return replace(self, filter=placement)

    def emission_specs(self) -> list[CoughSpec]:
        """Cough specs placed at their source seats."""
        specs = []
        for ev in self.emissions:
            x, y = self.layout.seat_position(*ev.source_seat)
            specs.append(ev.spec.at(x, y))
        return specs

    def mirrored(self) -> "Scenario":
        layout = self.layout.mirrored(self.geometry)
        cols = self.layout.cols
        emissions = []
        for ev in self.emissions:
            r, c = ev.source_seat
            d = ev.spec.direction
            emissions.append(
                replace(ev, source_seat=(r, cols - 1 - c), spec=replace(ev.spec, direction=(d[0], -d[1])))
            )
        placement = self.filter
        if placement.variant == "static":
            x, y = placement.point
            placement = FilterPlacement.static((x, self.geometry.length - y))
        return replace(self, layout=layout, emissions=tuple(emissions), filter=placement)


def service_time(d_y: float, v: float) -> float:
    """Time ``d_y / v`` to pass one occupant."""
    if v <= 0:
        raise ConfigurationError(f"robot speed must be positive, got {v!r}")
    return d_y / v


def cycle_time(N: int, d_y: float, v: float) -> float:
    """Patrol cycle ``N * d_y / v`` in seconds."""
    return check_positive_int(N, "N") * service_time(d_y, v)


def release_offsets(N: int, T_1: float) -> list[float]:
    """Possible cleaning delays ``n * T_1`` for ``n = 0 .. N-1``."""
    return [n * T_1 for n in range(check_positive_int(N, "N"))]


@dataclass(frozen=True)
class ObserverSet:
    positions: dict
    missing: tuple[str, ...] = ()


def observer_positions(layout: ClassroomLayout, source_seat) -> ObserverSet:
    """The up-to-five occupants beside and in front of the source.

    Offsets that fall off the layout are reported in ``missing``.
    """
    row, col = source_seat
    if not layout.has_seat(row, col):
        raise ConfigurationError(f"source seat {source_seat} is not in the layout")
    positions, missing = {}, []
    for label, (dr, dc) in OBSERVER_OFFSETS.items():
        if layout.has_seat(row + dr, col + dc):
            positions[label] = layout.seat_position(row + dr, col + dc)
        else:
            missing.append(label)
    return ObserverSet(positions, tuple(missing))


def sweep_order(layout: ClassroomLayout, N: int) -> list[tuple[int, int]]:
    """Seats in serpentine service order, truncated to the first ``N``."""
    order = []
    for i in range(layout.rows):
        cols = range(layout.cols)
        if (layout.sweep_direction == 1) != (i % 2 == 0):
            cols = reversed(cols)
        order.extend((i, j) for j in cols)
    return order[: min(N, len(order))]


def _lateral_direction(layout: ClassroomLayout, row: int) -> int:
    return layout.sweep_direction * (1 if row % 2 == 0 else -1)


def robot_pose(path: PathParams, layout: ClassroomLayout, t: float, release_offset: float,
               source_seat=(0, 0)):
    """Robot position at time ``t`` or ``None`` while it is off-zone.

    Each serviced seat owns a slot of ``T_1`` seconds during which the robot
    covers one seat pitch along the row's front line (``r`` in front of the
    seats), centered on the seat. Slots follow the serpentine order; after
    ``min(N, seats)`` slots the robot is off-zone until the cycle ends. The
    phase puts the robot in front of ``source_seat`` at
    ``release_offset + m * tau``.
    """
    order = sweep_order(layout, path.N)
    try:
        k_src = order.index(tuple(source_seat))
    except ValueError:
        raise ConfigurationError(
            f"source seat {tuple(source_seat)} is not serviced with N={path.N}"
        ) from None
    T_1 = service_time(layout.d_y, path.v)
    tau = path.N * T_1
    s = math.fmod(t - release_offset + (k_src + 0.5) * T_1, tau)
    if s < 0:
        s += tau
    k = int(s // T_1)
    if k >= len(order):
        return None
    row, col = order[k]
    x, y = layout.seat_position(row, col)
    offset = path.v * (s - k * T_1) - layout.d_y / 2
    return (x + path.r, y + _lateral_direction(layout, row) * offset)


@dataclass(frozen=True)
class StaticPlacements:
    near: tuple[float, float]
    far: tuple[float, float]
    clamped: frozenset = frozenset()


def static_placements(layout: ClassroomLayout, source_seat, geometry: RoomGeometry | None = None,
                      margin: float = 0.0) -> StaticPlacements:
    """Near (1.3 m ahead of the source) and far (2 m ahead of FrontCenter) filter points.

    With a geometry, points are clamped so they sit at least ``margin`` inside
    the walls; clamped names are listed in ``clamped``.
    """
    sx, sy = layout.seat_position(*source_seat)
    near = (sx + NEAR_STATIC_OFFSET, sy)
    far = (sx + layout.d_x + FAR_STATIC_OFFSET, sy)
    clamped = set()
    if geometry is not None:
        out = {}
        for name, (x, y) in (("near", near), ("far", far)):
            cx = min(max(x, margin), geometry.width - margin)
            cy = min(max(y, margin), geometry.length - margin)
            if (cx, cy) != (x, y):
                clamped.add(name)
            out[name] = (cx, cy)
        near, far = out["near"], out["far"]
    return StaticPlacements(near, far, frozenset(clamped))


def scenario_source(scenario: Scenario, seed: int = 0, virology: VirologyParams | None = None,
                    air: AirParams | None = None, t_handoff: int = 60) -> SourceSeries:
    """Summed source series of all emissions; each emission gets its own derived seed."""
    total = SourceSeries.zeros(scenario.geometry, t_handoff)
    specs = scenario.emission_specs()
    for spec, s in zip(specs, emission_seeds(seed, len(specs))):
        total = total + generate_source_series(spec, scenario.geometry, virology, air, s, t_handoff)
    return total
