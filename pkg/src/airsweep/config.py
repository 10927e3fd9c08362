"""YAML run configuration with strict keys and line-anchored errors.

Top-level keys (all optional):

``preset``      one of ``default``, ``four_person``, ``experiment``, ``symmetric``;
                the starting scenario that the sections below override
``room``        width, length, height, cell_size (m)
``layout``      d_x, d_y, rows, cols, seat_origin [x, y], sweep_direction
``emissions``   list of {seat: [row, col], emission_time, cough: {...}}
``filter``      {kind: mobile, v, r, N} | {kind: static, position: [x, y]}
                | {kind: static, preset: near|far|center} | {kind: none}
``diffusion``   k_d, k_t, dt, max_substeps
``robot``       footprint_w, footprint_l, flow_Q, v_max
``horizon``     seconds (multiple of the breathing window)
``virology``    c_saliva, k_evap
``air``         rho_water, mu_air, tau_jet, settling_cap, dispersivity
``breathing``   tidal_volume, breath_period, window
``source``      t_handoff, cache (path to a cached source series)
``simulate``    release_index (int or "last")
``optimize``    N (list), grid [n_v, n_r], refine, tolerance, max_evaluations,
                margin, slice_samples, slice_r, slice_v
``compare``     v, r, N (list)
``snapshots``   list of seconds
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field, fields, replace
from pathlib import Path

import yaml

from ._validation import ConfigurationError, check_positive, check_positive_int
from .exposure import BreathingParams
from .field import DiffusionParams, RoomGeometry
from .plume import AirParams, CoughSpec, VirologyParams
from .presets import (
    default_scenario,
    experiment_scenario,
    four_person_scenario,
    symmetric_scenario,
)
from .scenario import (
    ClassroomLayout,
    EmissionEvent,
    FilterPlacement,
    RobotSpec,
    Scenario,
    static_placements,
)

PRESETS = {
    "default": default_scenario,
    "four_person": four_person_scenario,
    "experiment": experiment_scenario,
    "symmetric": symmetric_scenario,
}

COUGH_KEYS = {f.name for f in fields(CoughSpec)} - {"origin"} | {"mouth_height"}
SECTION_KEYS = {
    "room": {"width", "length", "height", "cell_size"},
    "layout": {"d_x", "d_y", "rows", "cols", "seat_origin", "sweep_direction"},
    "diffusion": {f.name for f in fields(DiffusionParams)},
    "robot": {f.name for f in fields(RobotSpec)},
    "virology": {f.name for f in fields(VirologyParams)},
    "air": {f.name for f in fields(AirParams)},
    "breathing": {f.name for f in fields(BreathingParams)},
    "source": {"t_handoff", "cache"},
    "simulate": {"release_index"},
    "optimize": {"N", "grid", "refine", "tolerance", "max_evaluations", "margin",
                 "slice_samples", "slice_r", "slice_v"},
    "compare": {"v", "r", "N"},
}
TOP_KEYS = set(SECTION_KEYS) | {"preset", "emissions", "filter", "horizon", "snapshots"}


class ConfigError(ConfigurationError):
    def __init__(self, message: str, source: str = "<config>", line: int | None = None):
        self.line = line
        where = f"{source}:{line}" if line else source
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class OptimizeSettings:
    N: tuple = (10, 12, 14)
    grid: tuple = (8, 8)
    refine: bool = True
    tolerance: float = 1e-3
    max_evaluations: int = 60
    margin: float = 0.01
    slice_samples: int = 6
    slice_r: float = 1.3
    slice_v: float = 0.5

    def __post_init__(self):
        if not self.N:
            raise ConfigurationError("'N' must list at least one value")
        for n in self.N:
            check_positive_int(n, "N")
        for n in self.grid:
            check_positive_int(n, "grid")
        check_positive(self.tolerance, "tolerance")
        check_positive_int(self.max_evaluations, "max_evaluations")
        check_positive_int(self.slice_samples, "slice_samples")
        check_positive(self.slice_r, "slice_r")
        check_positive(self.slice_v, "slice_v")
        if not isinstance(self.refine, bool):
            raise ConfigurationError("'refine' must be true or false")


@dataclass(frozen=True)
class CompareSettings:
    v: float = 0.5
    r: float = 1.3
    N: tuple = (10, 12, 14)

    def __post_init__(self):
        if not self.N:
            raise ConfigurationError("'N' must list at least one value")
        for n in self.N:
            check_positive_int(n, "N")
        check_positive(self.v, "v")
        check_positive(self.r, "r")


@dataclass(frozen=True)
class RunSettings:
    scenario: Scenario
    virology: VirologyParams = dc_field(default_factory=VirologyParams)
    air: AirParams = dc_field(default_factory=AirParams)
    breathing: BreathingParams = dc_field(default_factory=BreathingParams)
    t_handoff: int = 60
    cache: str | None = None
    release_index: object = "last"
    optimize: OptimizeSettings = dc_field(default_factory=OptimizeSettings)
    compare: CompareSettings = dc_field(default_factory=CompareSettings)
    snapshots: tuple | None = None


def _line_map(text: str) -> dict:
    """Map key paths such as ``('filter', 'kind')`` to 1-based line numbers."""
    lines = {}

    def walk(node, path):
        if isinstance(node, yaml.MappingNode):
            for key_node, value_node in node.value:
                key = key_node.value
                lines[path + (key,)] = key_node.start_mark.line + 1
                walk(value_node, path + (key,))
        elif isinstance(node, yaml.SequenceNode):
            for k, item in enumerate(node.value):
                lines[path + (k,)] = item.start_mark.line + 1
                walk(item, path + (k,))

    root = yaml.compose(text, Loader=yaml.SafeLoader)
    if root is not None:
        walk(root, ())
    return lines


class _Builder:
    def __init__(self, data: dict, lines: dict, source: str):
        self.data = data
        self.lines = lines
        self.source = source

    def error(self, message: str, path=()) -> ConfigError:
        line = None
        path = tuple(path)
        while path and line is None:
            line = self.lines.get(path)
            path = path[:-1]
        return ConfigError(message, self.source, line)

    def section(self, name: str, allowed: set, path=None) -> dict:
        path = path or (name,)
        value = self.get(path)
        if value is None:
            return {}
        if not isinstance(value, dict):
            raise self.error(f"'{'.'.join(map(str, path))}' must be a mapping", path)
        for key in value:
            if key not in allowed:
                raise self.error(f"unknown key '{key}' in '{'.'.join(map(str, path))}'", path + (key,))
        return value

    def get(self, path):
        node = self.data
        for p in path:
            if isinstance(node, dict) and p in node:
                node = node[p]
            elif isinstance(node, list) and isinstance(p, int) and p < len(node):
                node = node[p]
            else:
                return None
        return node

    def build(self, path, factory, *args, **kwargs):
        try:
            return factory(*args, **kwargs)
        except (ConfigurationError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise self.error(str(exc), path) from None


def _tuple_of(value, n, name, b: _Builder, path):
    if not isinstance(value, (list, tuple)) or len(value) != n:
        raise b.error(f"'{name}' must be a list of {n} numbers", path)
    return tuple(value)


def _cough(b: _Builder, path) -> tuple[CoughSpec, float | None]:
    raw = dict(b.section(None, COUGH_KEYS, path))
    mouth = raw.pop("mouth_height", None)
    if "direction" in raw:
        raw["direction"] = _tuple_of(raw["direction"], 2, "direction", b, path + ("direction",))
    spec = b.build(path, CoughSpec, **raw)
    if mouth is not None:
        spec = b.build(path, replace, spec, origin=(0.0, 0.0, float(mouth)))
    return spec


def load_config(path) -> RunSettings:
    text = Path(path).read_text()
    return parse_config(text, str(path))


def parse_config(text: str, source: str = "<config>") -> RunSettings:
    try:
        data = yaml.safe_load(text)
        lines = _line_map(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}", source, line) from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping", source, 1)
    b = _Builder(data, lines, source)
    for key in data:
        if key not in TOP_KEYS:
            raise b.error(f"unknown top-level key '{key}'", (key,))

    preset = data.get("preset", "default")
    if preset not in PRESETS:
        raise b.error(f"unknown preset '{preset}' (choose from {sorted(PRESETS)})", ("preset",))
    base = PRESETS[preset]()

    room = b.section("room", SECTION_KEYS["room"])
    geometry = b.build(("room",), replace, base.geometry, **room) if room else base.geometry
    lay = dict(b.section("layout", SECTION_KEYS["layout"]))
    if "seat_origin" in lay:
        lay["seat_origin"] = _tuple_of(lay["seat_origin"], 2, "seat_origin", b, ("layout", "seat_origin"))
    layout = b.build(("layout",), replace, base.layout, **lay) if lay else base.layout
    diff = b.section("diffusion", SECTION_KEYS["diffusion"])
    diffusion = b.build(("diffusion",), replace, base.diffusion, **diff) if diff else base.diffusion
    rob = b.section("robot", SECTION_KEYS["robot"])
    robot = b.build(("robot",), replace, base.robot, **rob) if rob else base.robot

    if "emissions" in data:
        raw = data["emissions"] or []
        if not isinstance(raw, list):
            raise b.error("'emissions' must be a list", ("emissions",))
        emissions = []
        for k, item in enumerate(raw):
            p = ("emissions", k)
            ev = b.section(None, {"seat", "emission_time", "cough"}, p)
            if "seat" not in ev:
                raise b.error("emission needs a 'seat'", p)
            seat = _tuple_of(ev["seat"], 2, "seat", b, p + ("seat",))
            if not layout.has_seat(*seat):
                raise b.error(f"emission seat {list(seat)} is not in the "
                              f"{layout.rows}x{layout.cols} layout", p + ("seat",))
            spec = _cough(b, p + ("cough",)) if "cough" in ev else CoughSpec()
            emissions.append(b.build(p, EmissionEvent, seat, ev.get("emission_time", 0.0), spec))
        emissions = tuple(emissions)
    else:
        emissions = base.emissions

    horizon = data.get("horizon", base.horizon)
    scenario_wo_filter = b.build(
        ("horizon",) if "horizon" in data else (), Scenario, geometry, layout, emissions,
        FilterPlacement.none(), diffusion, robot, horizon,
    )
    placement = _filter(b, scenario_wo_filter, base.filter) if "filter" in data else base.filter
    scenario = b.build(("filter",), replace, scenario_wo_filter, filter=placement)

    vir = b.section("virology", SECTION_KEYS["virology"])
    air = b.section("air", SECTION_KEYS["air"])
    br = b.section("breathing", SECTION_KEYS["breathing"])
    src = b.section("source", SECTION_KEYS["source"])
    sim = b.section("simulate", SECTION_KEYS["simulate"])
    release_index = sim.get("release_index", "last")
    if release_index != "last" and not (isinstance(release_index, int) and release_index >= 0):
        raise b.error("'release_index' must be 'last' or a non-negative integer",
                      ("simulate", "release_index"))
    opt = dict(b.section("optimize", SECTION_KEYS["optimize"]))
    if "N" in opt:
        opt["N"] = tuple(opt["N"]) if isinstance(opt["N"], list) else (opt["N"],)
    if "grid" in opt:
        opt["grid"] = _tuple_of(opt["grid"], 2, "grid", b, ("optimize", "grid"))
    cmp_ = dict(b.section("compare", SECTION_KEYS["compare"]))
    if "N" in cmp_:
        cmp_["N"] = tuple(cmp_["N"]) if isinstance(cmp_["N"], list) else (cmp_["N"],)
    snapshots = data.get("snapshots")
    if snapshots is not None:
        if not isinstance(snapshots, list) or not all(isinstance(t, int) and t >= 0 for t in snapshots):
            raise b.error("'snapshots' must be a list of non-negative integer seconds", ("snapshots",))
        snapshots = tuple(snapshots)

    settings = RunSettings(
        scenario=scenario,
        virology=b.build(("virology",), VirologyParams, **vir),
        air=b.build(("air",), AirParams, **air),
        breathing=b.build(("breathing",), BreathingParams, **br),
        t_handoff=src.get("t_handoff", 60),
        cache=src.get("cache"),
        release_index=release_index,
        optimize=b.build(("optimize",), OptimizeSettings, **opt),
        compare=b.build(("compare",), CompareSettings, **cmp_),
        snapshots=snapshots,
    )
    if scenario.horizon % settings.breathing.window:
        raise b.error("horizon must be a multiple of the breathing window", ("horizon",))
    if not isinstance(settings.t_handoff, int) or settings.t_handoff < 1:
        raise b.error("'t_handoff' must be a positive integer", ("source", "t_handoff"))
    return settings


def _filter(b: _Builder, scenario: Scenario, fallback: FilterPlacement) -> FilterPlacement:
    raw = b.get(("filter",))
    if raw is None:
        return fallback
    if not isinstance(raw, dict) or "kind" not in raw:
        raise b.error("'filter' must be a mapping with a 'kind'", ("filter",))
    kind = raw["kind"]
    path = ("filter",)
    if kind == "mobile":
        f = b.section("filter", {"kind", "v", "r", "N"})
        missing = {"v", "r", "N"} - set(f)
        if missing:
            raise b.error(f"mobile filter is missing {sorted(missing)}", path)
        return b.build(path, FilterPlacement.mobile, f["v"], f["r"], f["N"])
    if kind == "static":
        f = b.section("filter", {"kind", "position", "preset"})
        if ("position" in f) == ("preset" in f):
            raise b.error("static filter needs exactly one of 'position' or 'preset'", path)
        if "position" in f:
            point = _tuple_of(f["position"], 2, "position", b, path + ("position",))
            return b.build(path, FilterPlacement.static, point)
        return b.build(path + ("preset",), static_preset, scenario, f["preset"])
    if kind == "none":
        b.section("filter", {"kind"})
        return FilterPlacement.none()
    raise b.error(f"unknown filter kind '{kind}'", path + ("kind",))


def static_preset(scenario: Scenario, name: str) -> FilterPlacement:
    """Static filter at ``near``/``far`` (relative to the source) or the seat ``center``."""
    if name == "center":
        return FilterPlacement.static(scenario.layout.centroid())
    if name not in ("near", "far"):
        raise ConfigurationError(f"unknown static preset '{name}'")
    margin = max(scenario.robot.footprint_w, scenario.robot.footprint_l) / 2
    places = static_placements(scenario.layout, scenario.source_seat, scenario.geometry, margin)
    return FilterPlacement.static(getattr(places, name))
