"""Command-line front end.

Exit codes: 0 success, 1 runtime failure, 2 configuration error. On a
configuration error nothing is written.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from ._validation import ConfigurationError
from .config import RunSettings, load_config, parse_config, static_preset
from .exposure import base_trajectory, run_scenario, write_run_csv
from .field import total_virus
from .io import write_pgm
from .optimize import (
    Bounds,
    PathObjective,
    evaluate_points,
    optimize_path,
    summary_text,
    trend_violations,
    write_result_csv,
    write_slice_csv,
)
from .plume import SourceSeries, load_series, save_series
from .scenario import (
    OBSERVER_LABELS,
    FilterPlacement,
    Scenario,
    release_offsets,
    scenario_source,
    service_time,
)

log = logging.getLogger("airsweep")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2
COMMANDS = ("simulate", "optimize", "compare", "plume")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _snapshot_list(text: str) -> tuple:
    try:
        values = tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad snapshot list {text!r}") from None
    if any(t < 0 for t in values):
        raise argparse.ArgumentTypeError("snapshot times must be non-negative")
    return values


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="airsweep", description="Mobile air-filtration classroom simulator")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", type=Path, help="YAML scenario configuration (default: built-in)")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--seed", type=int, default=0, help="source generation seed")
    p.add_argument("--jobs", type=int, default=1, help="worker threads for evaluations")
    p.add_argument("--snapshot", type=_snapshot_list, help="comma-separated snapshot seconds")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _source(settings: RunSettings, seed: int) -> SourceSeries:
    scenario = settings.scenario
    if settings.cache and Path(settings.cache).exists():
        series = load_series(settings.cache)
        if series.geometry != scenario.geometry:
            raise ConfigurationError(f"cached source {settings.cache} has a different geometry")
        return series
    return scenario_source(scenario, seed, settings.virology, settings.air, settings.t_handoff)


def _worst_offset(scenario: Scenario, index) -> float:
    path = scenario.filter.path
    offsets = release_offsets(path.N, service_time(scenario.layout.d_y, path.v))
    if index == "last":
        return offsets[-1]
    if index >= len(offsets):
        raise ConfigurationError(f"release_index {index} >= N={path.N}")
    return offsets[index]


def _heatmaps(out: Path, prefix: str, snapshots: dict) -> None:
    for t, f in sorted(snapshots.items()):
        write_pgm(out / f"{prefix}_t{t:04d}.pgm", f.values)


def cmd_simulate(settings: RunSettings, out: Path, seed: int, jobs: int, snapshots) -> None:
    scenario = settings.scenario
    snaps = snapshots or settings.snapshots or (1, 60, 300)
    source = _source(settings, seed)
    base = base_trajectory(source, scenario)
    t_c = _worst_offset(scenario, settings.release_index) if scenario.filter.variant == "mobile" else 0.0
    result = run_scenario(scenario, source, t_c, settings.breathing, snaps, base=base)
    references = {
        name: run_scenario(scenario.with_filter(placement), source, 0.0, settings.breathing,
                           snaps, base=base)
        for name, placement in (("no_filter", FilterPlacement.none()),
                                ("static_center", static_preset(scenario, "center")))
    }
    out.mkdir(parents=True, exist_ok=True)
    write_run_csv(result, out / "dosage.csv", out / "dosage_summary.csv")
    _heatmaps(out, "net", result.snapshots)
    lines = [
        f"filter = {scenario.filter.variant}",
        f"release_offset_s = {t_c!r}",
        f"removed_total_PFU = {result.removed_total!r}",
        f"clamp_count = {result.clamp_count}",
        f"ledger_residual = {result.ledger_residual!r}",
        f"missing_observers = {','.join(result.missing_observers) or '-'}",
    ]
    for t in sorted(result.snapshots):
        lines.append(f"airborne_PFU_t{t} = {total_virus(result.snapshots[t])!r}")
        for name, ref in references.items():
            lines.append(f"airborne_PFU_t{t}_{name} = {total_virus(ref.snapshots[t])!r}")
    (out / "summary.txt").write_text("\n".join(lines) + "\n")


def cmd_optimize(settings: RunSettings, out: Path, seed: int, jobs: int, snapshots) -> None:
    scenario = settings.scenario
    opt = settings.optimize
    source = _source(settings, seed)
    bounds = Bounds.for_scenario(scenario, opt.margin)
    n = opt.slice_samples
    lo, hi = bounds.lower, bounds.upper
    speeds = np.linspace(lo[0], hi[0], n) if n > 1 else np.array([opt.slice_v])
    dists = np.linspace(lo[1], hi[1], n) if n > 1 else np.array([opt.slice_r])
    # Everything is computed before the first file is written.
    files, blocks, values = {}, [], []
    for N in opt.N:
        objective = PathObjective(scenario, source, N, settings.breathing, bounds)
        result = optimize_path(N, scenario, source, resolution=opt.grid, refine=opt.refine,
                               tolerance=opt.tolerance, max_evaluations=opt.max_evaluations,
                               jobs=jobs, objective=objective)
        files[f"slice_speed_N{N}.csv"] = (write_slice_csv, evaluate_points(
            objective, [(v, opt.slice_r) for v in speeds], jobs, "slice"))
        files[f"slice_distance_N{N}.csv"] = (write_slice_csv, evaluate_points(
            objective, [(opt.slice_v, r) for r in dists], jobs, "slice"))
        files[f"optimize_N{N}.csv"] = (write_result_csv, result)
        blocks.append(summary_text(result))
        values.append(result.value_star)
    bad = trend_violations(values, increasing=True, slack=0.0)
    trend = "ok" if not bad else "violated at " + ", ".join(
        f"N={opt.N[k]}->{opt.N[k + 1]}" for k in bad)
    if bad:
        log.warning("optimal value not nondecreasing in N: %s", trend)
    out.mkdir(parents=True, exist_ok=True)
    for name, (writer, payload) in files.items():
        writer(payload, out / name)
    text = "\n".join(blocks) + f"\ntrend_value_star_nondecreasing_in_N = {trend}\n"
    (out / "optimize_summary.txt").write_text(text)


def compare_cases(settings: RunSettings, source: SourceSeries, jobs: int = 1) -> dict:
    """Robust dosage per observer for mobile (each N), near/far static and no filter."""
    scenario = settings.scenario
    cmp_ = settings.compare
    cases = []
    for N in cmp_.N:
        placement = FilterPlacement.mobile(cmp_.v, cmp_.r, N)
        sc = scenario.with_filter(placement)
        cases.append((f"mobile_N{N}", sc, _worst_offset(sc, "last")))
    cases.append(("near_static", scenario.with_filter(static_preset(scenario, "near")), 0.0))
    cases.append(("far_static", scenario.with_filter(static_preset(scenario, "far")), 0.0))
    cases.append(("no_filter", scenario.with_filter(FilterPlacement.none()), 0.0))
    base = base_trajectory(source, scenario)

    def run(case):
        name, sc, t_c = case
        return name, run_scenario(sc, source, t_c, settings.breathing, base=base).robust_dosages()

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return dict(pool.map(run, cases))
    return dict(map(run, cases))


def cmd_compare(settings: RunSettings, out: Path, seed: int, jobs: int, snapshots) -> None:
    source = _source(settings, seed)
    table = compare_cases(settings, source, jobs)
    names = list(table)
    labels = [l for l in OBSERVER_LABELS if l in table[names[0]]]
    peak = max((table[n][l] for n in names for l in labels), default=0.0)
    scale = peak if peak > 0 else 1.0
    out.mkdir(parents=True, exist_ok=True)
    for fname, divisor in (("compare.csv", scale), ("compare_raw_PFU.csv", 1.0)):
        with open(out / fname, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["observer"] + names)
            for l in labels:
                w.writerow([l] + [repr(table[n][l] / divisor) for n in names])
    (out / "compare_summary.txt").write_text(
        f"normalizer_PFU = {peak!r}\nvalues = robust dosage, normalized so the maximum is 1\n"
    )


def spread_extent(values: np.ndarray, geometry, origin, fraction: float = 0.9) -> float:
    """Smallest distance from ``origin`` within which ``fraction`` of the airborne virus lies."""
    total = values.sum()
    if total <= 0:
        return 0.0
    nx, ny = geometry.shape
    h = geometry.cell_size
    xc = (np.arange(nx) + 0.5) * h
    yc = (np.arange(ny) + 0.5) * h
    dist = np.hypot(xc[:, None] - origin[0], yc[None, :] - origin[1]).ravel()
    order = np.argsort(dist, kind="stable")
    cum = np.cumsum(values.ravel()[order])
    k = int(np.searchsorted(cum, fraction * total))
    return float(dist[order[min(k, len(order) - 1)]])


def cmd_plume(settings: RunSettings, out: Path, seed: int, jobs: int, snapshots) -> None:
    scenario = settings.scenario
    if not scenario.emissions:
        raise ConfigurationError("plume command needs at least one emission")
    snaps = snapshots or (1, 300)
    series = scenario_source(scenario, seed, settings.virology, settings.air, settings.t_handoff)
    horizon = max(max(snaps), settings.t_handoff, 300)
    extended = base_trajectory(series, replace(scenario, horizon=horizon))
    out.mkdir(parents=True, exist_ok=True)
    save_series(series, out / "source.apsrc")
    origin = scenario.emission_specs()[0].origin
    for t in snaps:
        write_pgm(out / f"plume_t{t:04d}.pgm", extended[t])
    with open(out / "plume.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_s", "airborne_PFU", "extent90_m"])
        for t in sorted(set(snaps) | {0, 1, 10, 30, 60, 120, 300}):
            v = extended[t]
            w.writerow([t, repr(float(v.sum() * scenario.geometry.cell_volume)),
                        repr(spread_extent(v, scenario.geometry, origin))])


HANDLERS = {"simulate": cmd_simulate, "optimize": cmd_optimize, "compare": cmd_compare,
            "plume": cmd_plume}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1 or not 0 <= args.seed < 2**64:
        print("airsweep: config error: --jobs must be >= 1 and --seed in [0, 2^64)",
              file=sys.stderr)
        return EXIT_CONFIG
    try:
        settings = load_config(args.config) if args.config else parse_config("", "<built-in>")
    except (ConfigurationError, OSError) as exc:
        print(f"airsweep: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        HANDLERS[args.command](settings, args.out, args.seed, args.jobs, args.snapshot)
    except ConfigurationError as exc:
        print(f"airsweep: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        print(f"airsweep: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
