"""Cough source: droplet sampling, a simplified Lagrangian stand-in, and binning.

The droplet model is a deliberately low-fidelity surrogate for a CFD run:
horizontal jet velocity decays exponentially, droplets settle at their
(capped) Stokes terminal velocity, deposit on the floor, reflect off walls and
ceiling, and optionally take a horizontal random walk with a constant eddy
diffusivity. Its only job is to produce a plausible 0-60 s concentration
series that the grid model then extrapolates.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field as dc_field, replace
from pathlib import Path

import numpy as np

from ._validation import (
    ConfigurationError,
    check_nonnegative,
    check_positive,
    check_positive_int,
)
from .field import ConcentrationField, RoomGeometry

GRAVITY = 9.81


@dataclass(frozen=True)
class CoughSpec:
    """Emission parameters for one cough. Lengths in meters, times in seconds."""

    droplet_count: int = 14000
    diameter_min: float = 1e-6
    diameter_max: float = 500e-6
    rr_mean_diameter: float = 80e-6
    rr_spread: float = 2.0
    jet_duration: float = 0.61
    jet_peak_velocity: float = 22.06
    jet_peak_time: float = 0.066
    origin: tuple[float, float, float] = (0.55, 4.05, 1.2)
    direction: tuple[float, float] = (1.0, 0.0)
    cone_half_angle_deg: float = 15.0
    mirror_pairs: bool = True

    def __post_init__(self):
        check_positive_int(self.droplet_count, "droplet_count")
        check_positive(self.diameter_min, "diameter_min")
        check_positive(self.rr_mean_diameter, "rr_mean_diameter")
        check_positive(self.rr_spread, "rr_spread")
        check_positive(self.jet_duration, "jet_duration")
        check_nonnegative(self.jet_peak_velocity, "jet_peak_velocity")
        if self.diameter_max < self.diameter_min:
            raise ConfigurationError("diameter_max must be >= diameter_min")
        if not (0.0 < self.jet_peak_time < self.jet_duration):
            raise ConfigurationError("jet_peak_time must lie inside (0, jet_duration)")
        if not (0.0 <= self.cone_half_angle_deg < 90.0):
            raise ConfigurationError("cone_half_angle_deg must lie in [0, 90)")
        d = np.asarray(self.direction, dtype=float)
        norm = float(np.hypot(*d))
        if d.shape != (2,) or norm == 0.0:
            raise ConfigurationError(f"direction must be a non-zero 2D vector, got {self.direction!r}")
        object.__setattr__(self, "direction", (float(d[0] / norm), float(d[1] / norm)))
        object.__setattr__(self, "origin", tuple(float(c) for c in self.origin))
        if len(self.origin) != 3 or self.origin[2] < 0:
            raise ConfigurationError("origin must be a 3D point with z >= 0")

    @property
    def mouth_height(self) -> float:
        return self.origin[2]

    def at(self, x: float, y: float) -> "CoughSpec":
        """Same cough emitted from horizontal position ``(x, y)``."""
        return replace(self, origin=(float(x), float(y), self.origin[2]))

    def jet_speed(self, t) -> np.ndarray:
        """Jet speed profile: linear rise to the peak, linear fall to zero at the end."""
        t = np.asarray(t, dtype=float)
        rise = self.jet_peak_velocity * t / self.jet_peak_time
        fall = self.jet_peak_velocity * (self.jet_duration - t) / (
            self.jet_duration - self.jet_peak_time
        )
        speed = np.where(t <= self.jet_peak_time, rise, fall)
        return np.clip(speed, 0.0, None) * ((t >= 0) & (t <= self.jet_duration))


@dataclass(frozen=True)
class AirParams:
    """Air and droplet-kinematics constants for the stand-in model."""

    rho_water: float = 1000.0
    mu_air: float = 1.81e-5
    tau_jet: float = 0.1
    settling_cap: float = 9.65
    dispersivity: float = 0.003

    def __post_init__(self):
        check_positive(self.rho_water, "rho_water")
        check_positive(self.mu_air, "mu_air")
        check_positive(self.tau_jet, "tau_jet")
        check_positive(self.settling_cap, "settling_cap")
        check_nonnegative(self.dispersivity, "dispersivity")

    def settling_velocity(self, radius) -> np.ndarray:
        diameter = 2.0 * np.asarray(radius, dtype=float)
        v_s = self.rho_water * GRAVITY * diameter**2 / (18.0 * self.mu_air)
        return np.minimum(v_s, self.settling_cap)


@dataclass(frozen=True)
class VirologyParams:
    """Virus load in saliva (PFU per m^3 of liquid) and evaporation consolidation factor."""

    c_saliva: float = 1e12
    k_evap: float = 10.0

    def __post_init__(self):
        check_positive(self.c_saliva, "c_saliva")
        check_positive(self.k_evap, "k_evap")

    def virus_per_droplet(self, radius) -> np.ndarray:
        r = np.asarray(radius, dtype=float)
        return self.k_evap * self.c_saliva * (4.0 * math.pi / 3.0) * r**3


@dataclass
class DropletCloud:
    """Droplets stored column-wise.

    When built with mirror pairs, droplet ``i`` and ``i + half`` are lateral
    mirror images about the emission axis; ``pair_axis`` holds that axis.
    """

    position: np.ndarray
    radius: np.ndarray
    velocity: np.ndarray
    active: np.ndarray
    pair_axis: tuple[float, float] | None = None
    half: int = 0

    def __len__(self) -> int:
        return len(self.radius)

    def copy(self) -> "DropletCloud":
        return DropletCloud(
            self.position.copy(),
            self.radius.copy(),
            self.velocity.copy(),
            self.active.copy(),
            self.pair_axis,
            self.half,
        )

    @property
    def active_count(self) -> int:
        return int(self.active.sum())


def rosin_rammler_cdf(d, mean_diameter: float, spread: float):
    return -np.expm1(-((np.asarray(d, dtype=float) / mean_diameter) ** spread))


def truncated_rr_cdf(d, spec: CoughSpec):
    """Rosin-Rammler CDF truncated to ``[diameter_min, diameter_max]``."""
    lo = rosin_rammler_cdf(spec.diameter_min, spec.rr_mean_diameter, spec.rr_spread)
    hi = rosin_rammler_cdf(spec.diameter_max, spec.rr_mean_diameter, spec.rr_spread)
    d = np.clip(np.asarray(d, dtype=float), spec.diameter_min, spec.diameter_max)
    return (rosin_rammler_cdf(d, spec.rr_mean_diameter, spec.rr_spread) - lo) / (hi - lo)


def sample_diameters(spec: CoughSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draws from the truncated Rosin-Rammler distribution."""
    if spec.diameter_min == spec.diameter_max:
        return np.full(n, spec.diameter_min)
    m, k = spec.rr_mean_diameter, spec.rr_spread
    # Work with survival probabilities so the upper tail keeps full precision.
    s_lo = math.exp(-((spec.diameter_min / m) ** k))
    s_hi = math.exp(-((spec.diameter_max / m) ** k))
    if s_lo - s_hi < 1e-12:
        raise ConfigurationError(
            "Rosin-Rammler mass inside [diameter_min, diameter_max] is below 1e-12"
        )
    s = s_lo - rng.random(n) * (s_lo - s_hi)
    return m * (-np.log(s)) ** (1.0 / k)


def _rotate(local: np.ndarray, axis: tuple[float, float]) -> np.ndarray:
    """Map (forward, lateral, up) components to world (x, y, z)."""
    ax, ay = axis
    out = np.empty_like(local)
    out[..., 0] = local[..., 0] * ax - local[..., 1] * ay
    out[..., 1] = local[..., 0] * ay + local[..., 1] * ax
    out[..., 2] = local[..., 2]
    return out


def mirror_lateral(vectors: np.ndarray, axis: tuple[float, float]) -> np.ndarray:
    """Reflect horizontal components across the line through the origin along ``axis``."""
    ax, ay = axis
    out = vectors.copy()
    if (ax, ay) == (1.0, 0.0):
        out[..., 1] = -out[..., 1]
    elif (ax, ay) == (0.0, 1.0):
        out[..., 0] = -out[..., 0]
    else:
        dot = vectors[..., 0] * ax + vectors[..., 1] * ay
        out[..., 0] = 2.0 * dot * ax - vectors[..., 0]
        out[..., 1] = 2.0 * dot * ay - vectors[..., 1]
    return out


def sample_droplets(spec: CoughSpec, seed) -> DropletCloud:
    """Draw ``spec.droplet_count`` droplets, all starting at the mouth.

    Each droplet's speed is the jet profile at an emission time drawn
    uniformly over the jet duration; its direction is uniform in solid angle
    inside the emission cone. With ``mirror_pairs`` the second half of the
    cloud is the lateral mirror image of the first half.
    """
    rng = np.random.default_rng(seed)
    n = spec.droplet_count
    paired = spec.mirror_pairs and n >= 2
    n_draw = n - n // 2 if paired else n
    diam = sample_diameters(spec, n_draw, rng)
    speed = spec.jet_speed(rng.random(n_draw) * spec.jet_duration)
    cos_lo = math.cos(math.radians(spec.cone_half_angle_deg))
    cos_t = 1.0 - rng.random(n_draw) * (1.0 - cos_lo)
    sin_t = np.sqrt(np.clip(1.0 - cos_t * cos_t, 0.0, None))
    phi = rng.random(n_draw) * 2.0 * math.pi
    local = np.column_stack([cos_t, sin_t * np.cos(phi), sin_t * np.sin(phi)]) * speed[:, None]
    vel = _rotate(local, spec.direction)
    half = 0
    if paired:
        # An odd count leaves the last draw unpaired.
        half = n // 2
        vel = np.concatenate([vel[:half], mirror_lateral(vel[:half], spec.direction), vel[half:]])
        diam = np.concatenate([diam[:half], diam[:half], diam[half:]])
    pos = np.tile(np.asarray(spec.origin, dtype=float), (n, 1))
    return DropletCloud(
        position=pos,
        radius=diam / 2.0,
        velocity=vel,
        active=np.ones(n, dtype=bool),
        pair_axis=spec.direction if paired else None,
        half=half,
    )


def _reflect(coord: np.ndarray, vel: np.ndarray, upper: float) -> None:
    """Fold coordinates into ``[0, upper]`` in place, flipping velocity on each bounce."""
    period = 2.0 * upper
    c = np.mod(coord, period)
    flipped = c > upper
    c[flipped] = period - c[flipped]
    crossings = np.floor_divide(coord, upper).astype(np.int64)
    vel[crossings % 2 == 1] *= -1.0
    coord[:] = c


def advance_droplets(
    cloud: DropletCloud,
    dt: float,
    air: AirParams,
    geometry: RoomGeometry | None = None,
    rng: np.random.Generator | None = None,
) -> DropletCloud:
    """Move active droplets forward by ``dt`` seconds and return a new cloud.

    Jet velocity (all three components) relaxes as ``exp(-t/tau_jet)`` and is
    integrated exactly over the step; gravity contributes a constant settling
    velocity. Droplets reaching the floor are deactivated and stay there.
    """
    dt = check_nonnegative(dt, "dt")
    out = cloud.copy()
    if dt == 0.0 or not out.active.any():
        return out
    act = out.active
    decay = math.exp(-dt / air.tau_jet)
    v = out.velocity[act]
    disp = v * (air.tau_jet * (1.0 - decay))
    v_s = air.settling_velocity(out.radius[act])
    disp[:, 2] -= v_s * dt
    if air.dispersivity > 0.0:
        if rng is None:
            raise ConfigurationError("a random generator is required when dispersivity > 0")
        disp[:, :2] += _random_walk(out, act, dt, air.dispersivity, rng)
    pos = out.position[act] + disp
    v = v * decay
    if geometry is not None:
        _reflect(pos[:, 0], v[:, 0], geometry.width)
        _reflect(pos[:, 1], v[:, 1], geometry.length)
        over = pos[:, 2] > geometry.height
        pos[over, 2] = 2.0 * geometry.height - pos[over, 2]
        v[over, 2] *= -1.0
    landed = pos[:, 2] <= 0.0
    pos[landed, 2] = 0.0
    v[landed] = 0.0
    out.position[act] = pos
    out.velocity[act] = v
    idx = np.flatnonzero(act)
    out.active[idx[landed]] = False
    return out


def _random_walk(cloud, act, dt, dispersivity, rng) -> np.ndarray:
    """Horizontal Gaussian steps; mirror partners receive mirrored steps."""
    n = len(cloud)
    sigma = math.sqrt(2.0 * dispersivity * dt)
    steps = np.zeros((n, 3))
    if cloud.pair_axis is not None and cloud.half:
        half = cloud.half
        first = np.zeros((half, 3))
        first[:, :2] = rng.standard_normal((half, 2)) * sigma
        steps[:half] = first
        steps[half : 2 * half] = mirror_lateral(first, cloud.pair_axis)
        if n > 2 * half:
            steps[2 * half :, :2] = rng.standard_normal((n - 2 * half, 2)) * sigma
    else:
        steps[:, :2] = rng.standard_normal((n, 2)) * sigma
    return steps[act, :2]


def bin_concentration(
    cloud: DropletCloud, geometry: RoomGeometry, vir: VirologyParams, timestamp: float = 0.0
) -> ConcentrationField:
    """Vertically averaged concentration from airborne droplets.

    Each active droplet adds its virus content divided by the cell's air
    column volume (``h**2 * H``) to the cell holding its horizontal position.
    """
    nx, ny = geometry.shape
    h = geometry.cell_size
    pos = cloud.position[cloud.active]
    load = vir.virus_per_droplet(cloud.radius[cloud.active])
    i = np.clip(np.floor(pos[:, 0] / h).astype(np.int64), 0, nx - 1)
    j = np.clip(np.floor(pos[:, 1] / h).astype(np.int64), 0, ny - 1)
    flat = np.bincount(i * ny + j, weights=load, minlength=nx * ny)
    return ConcentrationField(geometry, flat.reshape(nx, ny) / geometry.cell_volume, timestamp)


def cloud_virus(cloud: DropletCloud, vir: VirologyParams) -> float:
    """Closed-form airborne virus (PFU) carried by the active droplets."""
    return float(vir.virus_per_droplet(cloud.radius[cloud.active]).sum())


@dataclass(frozen=True)
class SourceSeries:
    """Per-second source concentration snapshots from t=0 to ``t_handoff``."""

    geometry: RoomGeometry
    values: np.ndarray
    t_handoff: int = 60
    active_counts: tuple[int, ...] = dc_field(default=())

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.t_handoff + 1, *self.geometry.shape):
            raise ConfigurationError(
                f"series shape {values.shape} does not match t_handoff={self.t_handoff} "
                f"and geometry {self.geometry.shape}"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.t_handoff + 1, dtype=float)

    @property
    def fields(self) -> list[ConcentrationField]:
        return [ConcentrationField(self.geometry, v, float(t)) for t, v in enumerate(self.values)]

    def __add__(self, other: "SourceSeries") -> "SourceSeries":
        if other.geometry != self.geometry or other.t_handoff != self.t_handoff:
            raise ConfigurationError("cannot add source series with different geometry or length")
        return SourceSeries(self.geometry, self.values + other.values, self.t_handoff)

    @classmethod
    def zeros(cls, geometry: RoomGeometry, t_handoff: int = 60) -> "SourceSeries":
        return cls(geometry, np.zeros((t_handoff + 1, *geometry.shape)), t_handoff)


def generate_source_series(
    spec: CoughSpec,
    geometry: RoomGeometry,
    vir: VirologyParams | None = None,
    air: AirParams | None = None,
    seed=0,
    t_handoff: int = 60,
    jet_step: float = 0.01,
    late_step: float = 0.1,
) -> SourceSeries:
    """Simulate one cough and bin a snapshot at every whole second up to ``t_handoff``.

    The first second is integrated at ``jet_step`` (the jet lasts well under a
    second), later seconds at ``late_step``.
    """
    vir = vir or VirologyParams()
    air = air or AirParams()
    check_positive_int(t_handoff, "t_handoff")
    if not geometry.contains(spec.origin[:2]) or spec.origin[2] > geometry.height:
        raise ConfigurationError(f"cough origin {spec.origin} lies outside the room")
    n_jet = max(1, math.ceil(1.0 / jet_step - 1e-9))
    n_late = max(1, math.ceil(1.0 / late_step - 1e-9))
    seq = np.random.SeedSequence(seed)
    sample_seq, walk_seq = seq.spawn(2)
    rng = np.random.default_rng(walk_seq)
    cloud = sample_droplets(spec, sample_seq)
    snaps = [bin_concentration(cloud, geometry, vir).values]
    counts = [cloud.active_count]
    for second in range(t_handoff):
        n_sub = n_jet if second == 0 else n_late
        for _ in range(n_sub):
            cloud = advance_droplets(cloud, 1.0 / n_sub, air, geometry, rng)
        snaps.append(bin_concentration(cloud, geometry, vir).values)
        counts.append(cloud.active_count)
    return SourceSeries(geometry, np.stack(snaps), t_handoff, tuple(counts))


def emission_seeds(seed: int, n: int) -> list[int]:
    """Independent per-emission seeds derived from one run seed."""
    return [int(s.generate_state(1, np.uint64)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


# -- snapshot cache ----------------------------------------------------------

CACHE_MAGIC = b"AIRSWEEP-SRC\0"
CACHE_VERSION = 1
_HEADER = struct.Struct("<HddddIII")


def save_series(series: SourceSeries, path) -> None:
    """Write a series to the versioned binary cache format.

    Layout (little-endian): magic, then ``u16 version, f64 width, f64 length,
    f64 height, f64 cell_size, u32 nx, u32 ny, u32 n_fields``, then per field a
    ``f64 timestamp`` followed by ``nx*ny`` row-major ``f64`` values.
    """
    nx, ny = series.geometry.shape
    g = series.geometry
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(_HEADER.pack(CACHE_VERSION, g.width, g.length, g.height, g.cell_size, nx, ny,
                              len(series.values)))
        for t, block in enumerate(series.values):
            fh.write(struct.pack("<d", float(t)))
            fh.write(np.ascontiguousarray(block, dtype="<f8").tobytes())


def load_series(path) -> SourceSeries:
    data = Path(path).read_bytes()
    if not data.startswith(CACHE_MAGIC):
        raise ConfigurationError(f"{path}: not a source-series cache file")
    off = len(CACHE_MAGIC)
    version, width, length, height, cell, nx, ny, n_fields = _HEADER.unpack_from(data, off)
    if version != CACHE_VERSION:
        raise ConfigurationError(f"{path}: unsupported cache version {version}")
    off += _HEADER.size
    geometry = RoomGeometry(width, length, height, cell)
    if geometry.shape != (nx, ny):
        raise ConfigurationError(f"{path}: geometry block inconsistent with grid size")
    block = 8 + nx * ny * 8
    if len(data) != off + n_fields * block:
        raise ConfigurationError(f"{path}: truncated or oversized cache file")
    values = np.empty((n_fields, nx, ny))
    for k in range(n_fields):
        (t,) = struct.unpack_from("<d", data, off)
        if t != k:
            raise ConfigurationError(f"{path}: field {k} has timestamp {t}, expected {k}")
        values[k] = np.frombuffer(data, dtype="<f8", count=nx * ny, offset=off + 8).reshape(nx, ny)
        off += block
    return SourceSeries(geometry, values, n_fields - 1)
