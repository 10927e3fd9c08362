"""Min-max path optimization: worst-case robust dosage over (speed, passing distance).

The objective at ``(v, r)`` runs the scenario once per possible cleaning
delay and returns the largest robust dosage over observers and delays.
:func:`optimize_path` scans a grid and then polishes the grid argmin with a
bounded Nelder-Mead search.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field, replace

import numpy as np
from scipy.optimize import minimize
from sklearn.base import BaseEstimator

from ._validation import ConfigurationError, check_positive_int
from .exposure import BreathingParams, base_trajectory, run_scenario
from .plume import SourceSeries
from .scenario import FilterPlacement, Scenario, release_offsets, service_time


@dataclass(frozen=True)
class ObjectiveSample:
    v: float
    r: float
    worst_observer: str
    worst_T_C: float
    value: float
    observer_values: dict = dc_field(default_factory=dict, compare=False)
    stage: str = "grid"


@dataclass(frozen=True)
class Bounds:
    """Open search box ``v in (0, v_max)``, ``r in (0, r_max)``.

    Searches stay ``margin`` (a fraction of each span) away from the open ends.
    """

    v_max: float
    r_max: float
    margin: float = 0.01

    def __post_init__(self):
        if self.v_max <= 0 or self.r_max <= 0:
            raise ConfigurationError("bounds must have positive upper limits")
        if not (0.0 < self.margin < 0.5):
            raise ConfigurationError("margin must lie in (0, 0.5)")

    @classmethod
    def for_scenario(cls, scenario: Scenario, margin: float = 0.01) -> "Bounds":
        return cls(scenario.robot.v_max, scenario.layout.d_x, margin)

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.v_max, self.r_max]) * self.margin

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.v_max, self.r_max]) * (1.0 - self.margin)

    def contains(self, v: float, r: float) -> bool:
        return 0.0 < v < self.v_max and 0.0 < r < self.r_max

    def to_unit(self, point) -> np.ndarray:
        return (np.asarray(point, dtype=float) - self.lower) / (self.upper - self.lower)

    def from_unit(self, u) -> np.ndarray:
        u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        return self.lower + u * (self.upper - self.lower)


@dataclass(frozen=True)
class OptimizationResult:
    v_star: float
    r_star: float
    value_star: float
    table: tuple
    evaluations: int
    efficacy_star: float | None = None
    worst_observer: str | None = None
    worst_T_C: float | None = None
    budget_exhausted: bool = False
    N: int | None = None

    def grid_table(self) -> list:
        return [s for s in self.table if s.stage == "grid"]


def _argmin(samples) -> ObjectiveSample:
    """Smallest value; ties go to smaller ``v`` then smaller ``r``."""
    return min(samples, key=lambda s: (s.value, s.v, s.r))


def _result(samples, best: ObjectiveSample, **extra) -> OptimizationResult:
    return OptimizationResult(
        v_star=best.v,
        r_star=best.r,
        value_star=best.value,
        table=tuple(samples),
        evaluations=len(samples),
        worst_observer=best.worst_observer,
        worst_T_C=best.worst_T_C,
        **extra,
    )


class PathObjective:
    """Callable ``(v, r) -> ObjectiveSample`` for a fixed scenario, source and ``N``.

    The filter-free base trajectory does not depend on the path, so it is
    computed once and shared by every evaluation.
    """

    def __init__(self, scenario: Scenario, source: SourceSeries, N: int,
                 breathing: BreathingParams | None = None, bounds: Bounds | None = None):
        self.scenario = scenario
        self.source = source
        self.N = check_positive_int(N, "N")
        self.breathing = breathing or BreathingParams()
        self.bounds = bounds or Bounds.for_scenario(scenario)
        self.base = base_trajectory(source, scenario)
        self._baseline = None

    def __call__(self, v: float, r: float) -> ObjectiveSample:
        v, r = float(v), float(r)
        if not self.bounds.contains(v, r):
            raise ConfigurationError(
                f"(v={v}, r={r}) outside (0, {self.bounds.v_max}) x (0, {self.bounds.r_max})"
            )
        scenario = self.scenario.with_filter(FilterPlacement.mobile(v, r, self.N))
        per_observer = {}
        worst = (-math.inf, "", 0.0)
        for t_c in release_offsets(self.N, service_time(scenario.layout.d_y, v)):
            run = run_scenario(scenario, self.source, t_c, self.breathing, base=self.base)
            for label, value in run.robust_dosages().items():
                if value > per_observer.get(label, -math.inf):
                    per_observer[label] = value
                if value > worst[0]:
                    worst = (value, label, t_c)
        return ObjectiveSample(v, r, worst[1], worst[2], worst[0], per_observer)

    def baseline(self) -> ObjectiveSample:
        """Objective with the filter removed (no dependence on ``v`` or ``r``)."""
        if self._baseline is None:
            run = run_scenario(self.scenario.with_filter(FilterPlacement.none()), self.source,
                               0.0, self.breathing, base=self.base)
            rob = run.robust_dosages()
            label, value = run.worst()
            self._baseline = ObjectiveSample(math.nan, math.nan, label, 0.0, value, rob, "baseline")
        return self._baseline


def evaluate_objective(v: float, r: float, N: int, scenario: Scenario, source: SourceSeries,
                       breathing: BreathingParams | None = None) -> ObjectiveSample:
    return PathObjective(scenario, source, N, breathing)(v, r)


def evaluate_points(objective, points, jobs: int = 1, stage: str = "grid") -> list:
    """Evaluate ``objective`` at each ``(v, r)``; output order always matches ``points``."""
    points = [(float(v), float(r)) for v, r in points]

    def one(p):
        s = objective(*p)
        return replace(s, stage=stage) if isinstance(s, ObjectiveSample) else _wrap(p, s, stage)

    if jobs > 1 and len(points) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(one, points))
    return [one(p) for p in points]


def _wrap(point, value, stage) -> ObjectiveSample:
    return ObjectiveSample(point[0], point[1], "", 0.0, float(value), {}, stage)


def grid_points(bounds: Bounds, resolution) -> tuple[np.ndarray, np.ndarray]:
    n_v, n_r = (check_positive_int(n, "grid resolution") for n in resolution)
    lo, hi = bounds.lower, bounds.upper
    vs = np.linspace(lo[0], hi[0], n_v) if n_v > 1 else np.array([(lo[0] + hi[0]) / 2])
    rs = np.linspace(lo[1], hi[1], n_r) if n_r > 1 else np.array([(lo[1] + hi[1]) / 2])
    return vs, rs


def grid_search(objective, bounds: Bounds, resolution=(8, 8), jobs: int = 1) -> OptimizationResult:
    """Exhaustive scan of an interior ``n_v x n_r`` grid; returns the grid argmin."""
    vs, rs = grid_points(bounds, resolution)
    samples = evaluate_points(objective, [(v, r) for v in vs for r in rs], jobs)
    return _result(samples, _argmin(samples))


def refine_local(objective, start, bounds: Bounds, tolerance: float = 1e-3,
                 max_evaluations: int = 60, initial_step: float = 0.1) -> OptimizationResult:
    """Bounded Nelder-Mead from ``start`` in unit-normalized coordinates.

    Stops once the simplex is smaller than ``tolerance`` (in unit-box units)
    or after ``max_evaluations`` distinct evaluations. The returned point is
    the best seen, so it is never worse than ``start``.
    """
    start = (float(start[0]), float(start[1]))
    if not bounds.contains(*start):
        raise ConfigurationError(f"start point {start} is outside the search bounds")
    memo = {}
    order = []

    def evaluate(point):
        key = (float(point[0]), float(point[1]))
        if key not in memo:
            memo[key] = evaluate_points(objective, [key], stage="refine")[0]
            order.append(key)
        return memo[key]

    first = evaluate(start)
    exhausted = False
    if tolerance < 1.0 and max_evaluations > 1:
        u0 = np.clip(bounds.to_unit(start), 0.0, 1.0)
        simplex = [u0]
        for k in range(2):
            step = np.zeros(2)
            step[k] = initial_step if u0[k] + initial_step <= 1.0 else -initial_step
            simplex.append(np.clip(u0 + step, 0.0, 1.0))

        def f(u):
            return evaluate(bounds.from_unit(u)).value

        res = minimize(
            f, u0, method="Nelder-Mead", bounds=[(0.0, 1.0), (0.0, 1.0)],
            options={"xatol": tolerance, "fatol": math.inf, "maxfev": max_evaluations,
                     "initial_simplex": np.array(simplex)},
        )
        exhausted = not res.success and len(memo) >= max_evaluations
    samples = [memo[k] for k in order]
    best = _argmin(samples)
    if best.value > first.value:
        best = first
    return _result(samples, best, budget_exhausted=exhausted)


def optimize_path(N: int, scenario: Scenario, source: SourceSeries, bounds: Bounds | None = None,
                  resolution=(8, 8), refine: bool = True, tolerance: float = 1e-3,
                  max_evaluations: int = 60, jobs: int = 1,
                  breathing: BreathingParams | None = None,
                  objective: PathObjective | None = None) -> OptimizationResult:
    """Grid scan, then local refinement from the grid argmin.

    A 1 x 1 grid has no spacing to refine within, so refinement is skipped.
    """
    objective = objective or PathObjective(scenario, source, N, breathing, bounds)
    bounds = objective.bounds
    grid = grid_search(objective, bounds, resolution, jobs)
    samples = list(grid.table)
    exhausted = False
    if refine and tuple(resolution) != (1, 1):
        step = min(1.0 / (n - 1) for n in resolution if n > 1)
        local = refine_local(objective, (grid.v_star, grid.r_star), bounds, tolerance,
                             max_evaluations, initial_step=step)
        # The refinement re-evaluates its start point; keep only new points.
        seen = {(s.v, s.r) for s in samples}
        samples += [s for s in local.table if (s.v, s.r) not in seen]
        exhausted = local.budget_exhausted
    best = _argmin(samples)
    baseline = objective.baseline().value
    eff = 1.0 - best.value / baseline if baseline > 0 else None
    return _result(samples, best, efficacy_star=eff, budget_exhausted=exhausted, N=objective.N)


def trend_violations(values, increasing: bool, slack: float = 0.02) -> list:
    """Indices ``k`` where ``values[k+1]`` breaks the expected monotone trend.

    A nonincreasing trend tolerates ``values[k+1] <= values[k] * (1 + slack)``;
    a nondecreasing one tolerates ``values[k+1] >= values[k] * (1 - slack)``.
    """
    bad = []
    for k in range(len(values) - 1):
        a, b = values[k], values[k + 1]
        ok = b >= a * (1.0 - slack) if increasing else b <= a * (1.0 + slack)
        if not ok:
            bad.append(k)
    return bad


def write_result_csv(result: OptimizationResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["v_mps", "r_m", "stage", "worst_T_C_s", "worst_observer", "value_PFU"])
        for s in result.table:
            w.writerow([repr(s.v), repr(s.r), s.stage, repr(s.worst_T_C), s.worst_observer,
                        repr(s.value)])


def write_slice_csv(samples, path, label: str = "FrontCenter") -> None:
    """Slice rows: the parameters, the worst-case objective, and one observer's worst value."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["v_mps", "r_m", "worst_T_C_s", "worst_observer", "value_PFU",
                    f"{label}_robust_dosage_PFU"])
        for s in samples:
            w.writerow([repr(s.v), repr(s.r), repr(s.worst_T_C), s.worst_observer, repr(s.value),
                        repr(s.observer_values.get(label, math.nan))])


def summary_text(result: OptimizationResult) -> str:
    lines = [
        f"N = {result.N}",
        f"v_star_mps = {result.v_star!r}",
        f"r_star_m = {result.r_star!r}",
        f"value_star_PFU = {result.value_star!r}",
        f"efficacy_star = {result.efficacy_star!r}",
        f"worst_observer = {result.worst_observer}",
        f"worst_T_C_s = {result.worst_T_C!r}",
        f"evaluations = {result.evaluations}",
        f"budget_exhausted = {result.budget_exhausted}",
    ]
    return "\n".join(lines) + "\n"


class PathOptimizer(BaseEstimator):
    """Estimator wrapper around :func:`optimize_path`.

    ``fit`` takes a :class:`SourceSeries` and stores the optimum in
    ``v_star_``, ``r_star_``, ``value_star_``, ``efficacy_star_`` and the full
    :class:`OptimizationResult` in ``result_``.

    Parameters
    ----------
    scenario : Scenario, optional
        Scenario template; its filter placement is replaced during the search.
        Defaults to the 3 m x 8 m classroom.
    N : int
        People serviced per patrol cycle.
    grid_resolution : tuple of int
        Grid points along ``v`` and ``r``.
    refine : bool
        Polish the grid argmin with Nelder-Mead.
    tolerance, max_evaluations :
        Refinement stopping rules.
    margin : float
        Interior margin as a fraction of each bound span.
    n_jobs : int
        Threads used for the grid scan.
    """

    def __init__(self, scenario=None, N=10, grid_resolution=(8, 8), refine=True,
                 tolerance=1e-3, max_evaluations=60, margin=0.01, n_jobs=1):
        self.scenario = scenario
        self.N = N
        self.grid_resolution = grid_resolution
        self.refine = refine
        self.tolerance = tolerance
        self.max_evaluations = max_evaluations
        self.margin = margin
        self.n_jobs = n_jobs

    def _scenario(self) -> Scenario:
        if self.scenario is None:
            from .presets import default_scenario

            return default_scenario()
        return self.scenario

    def _check_source(self, X) -> SourceSeries:
        if not isinstance(X, SourceSeries):
            raise TypeError(f"expected a SourceSeries, got {type(X).__name__}")
        return X

    def fit(self, X, y=None):
        source = self._check_source(X)
        scenario = self._scenario()
        bounds = Bounds.for_scenario(scenario, self.margin)
        self.objective_ = PathObjective(scenario, source, self.N, bounds=bounds)
        self.result_ = optimize_path(
            self.N, scenario, source, resolution=tuple(self.grid_resolution), refine=self.refine,
            tolerance=self.tolerance, max_evaluations=self.max_evaluations, jobs=self.n_jobs,
            objective=self.objective_,
        )
        self.v_star_ = self.result_.v_star
        self.r_star_ = self.result_.r_star
        self.value_star_ = self.result_.value_star
        self.efficacy_star_ = self.result_.efficacy_star
        return self

    def predict(self, X) -> ObjectiveSample:
        """Worst-case objective at the fitted ``(v_star_, r_star_)`` for another source."""
        if not hasattr(self, "result_"):
            raise AttributeError("PathOptimizer is not fitted yet; call fit first")
        source = self._check_source(X)
        return PathObjective(self._scenario(), source, self.N)(self.v_star_, self.r_star_)

    def score(self, X, y=None) -> float:
        """Negative worst-case dosage at the fitted optimum (higher is better)."""
        return -self.predict(X).value
