"""Scenario time stepping, inhaled dosage, robust dosage, efficacy and risk labels."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from ._validation import ConfigurationError, check_positive
from .field import ConcentrationField, RoomGeometry, diffuse_values, split_removal
from .plume import SourceSeries
from .scenario import Scenario, observer_positions, release_offsets, robot_pose, service_time

#: Dosage (PFU) associated with at most a 5% chance of illness.
RISK_REFERENCE_PFU = 10.0


@dataclass(frozen=True)
class BreathingParams:
    """One breath of ``tidal_volume`` m^3 per ``window`` seconds."""

    tidal_volume: float = 5e-4
    breath_period: float = 5.0
    window: int = 5

    def __post_init__(self):
        check_positive(self.tidal_volume, "tidal_volume")
        check_positive(self.breath_period, "breath_period")
        if int(self.window) != self.window or self.window < 1:
            raise ConfigurationError("window must be a whole number of seconds")
        if self.breath_period != self.window:
            raise ConfigurationError("breath_period must equal the averaging window")


@dataclass(frozen=True)
class DosageRecord:
    label: str
    position: tuple[float, float]
    cell: tuple[int, int]
    window_ends: np.ndarray
    cumulative: np.ndarray
    cell_dosages: np.ndarray
    clipped: bool = False

    @property
    def dosage(self) -> float:
        return float(self.cumulative[-1]) if len(self.cumulative) else 0.0

    @property
    def robust_dosage(self) -> float:
        return robust_dosage(self.cell_dosages)


@dataclass
class RunResult:
    records: dict
    removed_total: float
    airborne: np.ndarray
    snapshots: dict = dc_field(default_factory=dict)
    missing_observers: tuple[str, ...] = ()
    clamp_count: int = 0
    ledger_residual: float = 0.0
    release_offset: float = 0.0

    def dosages(self) -> dict:
        return {k: r.dosage for k, r in self.records.items()}

    def robust_dosages(self) -> dict:
        return {k: r.robust_dosage for k, r in self.records.items()}

    def worst(self) -> tuple[str, float]:
        """Observer with the largest robust dosage (first label wins ties)."""
        best_label, best = None, -math.inf
        for label, rec in self.records.items():
            if rec.robust_dosage > best:
                best_label, best = label, rec.robust_dosage
        return best_label, best


def window_dosage(samples, breathing: BreathingParams) -> np.ndarray:
    """Cumulative dosage at each window end from per-second concentration samples.

    ``samples`` has time on axis 0; its length must be a multiple of the
    window. Each window contributes its mean concentration times the tidal
    volume.
    """
    samples = np.asarray(samples, dtype=float)
    w = int(breathing.window)
    if len(samples) % w:
        raise ConfigurationError(f"{len(samples)} samples is not a multiple of the {w} s window")
    per_window = samples.reshape(len(samples) // w, w, *samples.shape[1:]).mean(axis=1)
    return np.cumsum(per_window * breathing.tidal_volume, axis=0)


def neighborhood(geometry: RoomGeometry, cell) -> tuple[list, bool]:
    """The 3x3 cells centered on ``cell`` that exist, and whether any were clipped."""
    nx, ny = geometry.shape
    i, j = cell
    cells = [(i + di, j + dj) for di in (-1, 0, 1) for dj in (-1, 0, 1)]
    inside = [(a, b) for a, b in cells if 0 <= a < nx and 0 <= b < ny]
    return inside, len(inside) < 9


def robust_dosage(cell_dosages) -> float:
    """Maximum dosage over the (possibly wall-clipped) 3x3 neighborhood."""
    arr = np.asarray(cell_dosages, dtype=float)
    return float(np.nanmax(arr))


def _record(label, position, geometry, cum_by_cell, breathing, horizon) -> DosageRecord:
    cell = geometry.cell_of(position)
    cells, clipped = neighborhood(geometry, cell)
    grid = np.full((3, 3), np.nan)
    for c in cells:
        grid[c[0] - cell[0] + 1, c[1] - cell[1] + 1] = cum_by_cell[c][-1]
    w = int(breathing.window)
    return DosageRecord(
        label=label,
        position=tuple(position),
        cell=cell,
        window_ends=np.arange(w, horizon + 1, w, dtype=float),
        cumulative=cum_by_cell[cell],
        cell_dosages=grid,
        clipped=clipped,
    )


def accumulate_dosage(series, position, breathing: BreathingParams | None = None,
                      horizon: int | None = None, geometry: RoomGeometry | None = None,
                      label: str = "observer") -> DosageRecord:
    """Dosage record for one observer from a stack of net concentration fields.

    ``series`` is a sequence of :class:`ConcentrationField` or an array of
    shape ``(T, nx, ny)`` sampled once per second (then ``geometry`` is
    required). Only the first ``horizon`` samples are used.
    """
    breathing = breathing or BreathingParams()
    if len(series) and isinstance(series[0], ConcentrationField):
        geometry = series[0].geometry
        stack = np.stack([f.values for f in series])
    else:
        stack = np.asarray(series, dtype=float)
        if geometry is None:
            raise ConfigurationError("geometry is required with a raw array series")
    horizon = len(stack) if horizon is None else int(horizon)
    if horizon > len(stack):
        raise ConfigurationError(f"horizon {horizon} s exceeds the {len(stack)} samples given")
    if not geometry.contains(position):
        raise ConfigurationError(f"observer at {tuple(position)} is outside the room")
    cells, _ = neighborhood(geometry, geometry.cell_of(position))
    cum = {c: window_dosage(stack[:horizon, c[0], c[1]], breathing) for c in cells}
    return _record(label, position, geometry, cum, breathing, horizon)


def base_trajectory(source: SourceSeries, scenario: Scenario) -> np.ndarray:
    """Filter-free field ``B(t)`` for ``t = 0 .. horizon``.

    The source series is used verbatim up to its handoff time, then extended
    by decayed diffusion.
    """
    horizon = scenario.horizon
    nx, ny = scenario.geometry.shape
    out = np.empty((horizon + 1, nx, ny))
    n_src = min(source.t_handoff, horizon) + 1
    out[:n_src] = source.values[:n_src]
    h = scenario.geometry.cell_size
    for t in range(n_src, horizon + 1):
        out[t] = diffuse_values(out[t - 1], scenario.diffusion, h)
    return out


class _FootprintCache:
    """Footprint cell masks keyed by robot position."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self._cache = {}

    def __call__(self, pos):
        key = (round(pos[0], 9), round(pos[1], 9))
        hit = self._cache.get(key)
        if hit is None:
            cells = self.scenario.robot.footprint(self.scenario.geometry, pos).cells
            hit = (cells[:, 0].copy(), cells[:, 1].copy()) if len(cells) else None
            self._cache[key] = hit
        return hit


def run_scenario(
    scenario: Scenario,
    source: SourceSeries,
    release_offset: float = 0.0,
    breathing: BreathingParams | None = None,
    snapshot_times=(),
    base: np.ndarray | None = None,
) -> RunResult:
    """Advance one scenario from t=0 to its horizon and collect observer dosages.

    Two fields are tracked: the filter-free base ``B`` and the accumulated
    removal ``R``, both advanced by the same decayed diffusion. The net field
    seen by occupants is ``max(B - R, 0)``. Each second the net field is
    sampled for dosage, then the filter removes ``k_f`` of the net content
    inside its footprint and adds it to ``R``.
    """
    breathing = breathing or BreathingParams()
    geometry = scenario.geometry
    if source.geometry != geometry:
        raise ConfigurationError("source series geometry does not match the scenario")
    horizon = scenario.horizon
    if horizon % int(breathing.window):
        raise ConfigurationError(f"horizon {horizon} s is not a multiple of the breathing window")
    placement = scenario.filter
    source_seat = scenario.source_seat
    if placement.variant == "mobile":
        path = placement.path
        offsets = release_offsets(path.N, service_time(scenario.layout.d_y, path.v))
        if not any(math.isclose(release_offset, o, rel_tol=1e-9, abs_tol=1e-9) for o in offsets):
            raise ConfigurationError(f"release offset {release_offset} is not a multiple of T_1")
    if base is None:
        base = base_trajectory(source, scenario)
    elif base.shape[0] < horizon + 1 or base.shape[1:] != geometry.shape:
        raise ConfigurationError("precomputed base trajectory does not cover the scenario")

    observers = observer_positions(scenario.layout, source_seat)
    cell_list = []
    for pos in observers.positions.values():
        for c in neighborhood(geometry, geometry.cell_of(pos))[0]:
            if c not in cell_list:
                cell_list.append(c)
    ci = np.array([c[0] for c in cell_list], dtype=int)
    cj = np.array([c[1] for c in cell_list], dtype=int)
    samples = np.zeros((horizon, len(cell_list)))

    k_f = scenario.robot.k_f(geometry.height, scenario.diffusion.dt)
    footprint = _FootprintCache(scenario)
    static_fp = footprint(placement.point) if placement.variant == "static" else None
    active = placement.variant != "none" and k_f > 0.0
    h = geometry.cell_size
    cell_volume = geometry.cell_volume
    snapshot_times = sorted({int(t) for t in snapshot_times})
    snapshots = {}
    airborne = np.empty(horizon + 1)
    R = np.zeros(geometry.shape)
    r_live = False
    removed_total = 0.0
    clamp_count = 0
    residual = 0.0

    for t in range(horizon + 1):
        B = base[t]
        if r_live:
            net_pre = B - R
            clamped = net_pre < 0.0
            clamp_count += int(clamped.sum())
            b_sum = B.sum()
            if b_sum > 0:
                residual = max(residual, float(abs(b_sum - R.sum() - net_pre.sum()) / b_sum))
            net = np.where(clamped, 0.0, net_pre)
        else:
            net = B
        airborne[t] = net.sum() * cell_volume
        if t in snapshot_times:
            snapshots[t] = ConcentrationField(geometry, net, float(t))
        if t == horizon:
            break
        samples[t] = net[ci, cj]
        if not active:
            continue
        if placement.variant == "mobile":
            pos = robot_pose(placement.path, scenario.layout, float(t), release_offset, source_seat)
            fp = footprint(pos) if pos is not None else None
        else:
            fp = static_fp
        if fp is not None:
            _, removed = split_removal(net[fp], k_f)
            if removed.any():
                R[fp] += removed
                removed_total += float(removed.sum()) * cell_volume
                r_live = True
        if r_live:
            R = diffuse_values(R, scenario.diffusion, h)
            np.maximum(R, 0.0, out=R)

    cum = window_dosage(samples, breathing)
    cum_by_cell = {c: cum[:, k] for k, c in enumerate(cell_list)}
    records = {
        label: _record(label, pos, geometry, cum_by_cell, breathing, horizon)
        for label, pos in observers.positions.items()
    }
    return RunResult(
        records=records,
        removed_total=removed_total,
        airborne=airborne,
        snapshots=snapshots,
        missing_observers=observers.missing,
        clamp_count=clamp_count,
        ledger_residual=residual,
        release_offset=float(release_offset),
    )


def efficacy(filtered: float, baseline: float) -> float:
    """Fractional reduction ``1 - filtered / baseline`` of the worst-case dosage."""
    if not baseline > 0:
        raise ZeroDivisionError("efficacy is undefined for a zero baseline dosage")
    return 1.0 - filtered / baseline


@dataclass(frozen=True)
class RiskAssessment:
    label: str
    margin: float


def risk_label(dosage: float, reference: float = RISK_REFERENCE_PFU) -> RiskAssessment:
    """Compare a dosage with the 10 PFU reference; ``margin = reference - dosage``."""
    if dosage < 0:
        raise ValueError(f"dosage must be non-negative, got {dosage!r}")
    label = "below-reference" if dosage < reference else "above-reference"
    return RiskAssessment(label, reference - dosage)


def write_run_csv(result: RunResult, dosage_path, summary_path) -> None:
    """Per-window cumulative dosage rows and one summary row per observer."""
    with open(dosage_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["observer", "window", "t_end_s", "cumulative_dosage_PFU"])
        for label, rec in result.records.items():
            for k, (t_end, d) in enumerate(zip(rec.window_ends, rec.cumulative)):
                w.writerow([label, k, f"{t_end:g}", repr(float(d))])
    with open(summary_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["observer", "dosage_PFU", "robust_dosage_PFU", "risk_label", "margin_PFU",
                    "neighborhood_clipped"])
        for label, rec in result.records.items():
            risk = risk_label(rec.dosage)
            w.writerow([label, repr(rec.dosage), repr(rec.robust_dosage), risk.label,
                        repr(risk.margin), int(rec.clipped)])
