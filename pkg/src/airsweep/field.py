"""Vertically averaged concentration grid and its time evolution.

The grid is indexed ``values[i, j]`` where ``i`` runs along the room width
(the occupants' facing direction, ``x``) and ``j`` along the room length
(the lateral direction, ``y``). Cell ``(i, j)`` covers
``[i*h, (i+1)*h) x [j*h, (j+1)*h)`` for cell size ``h``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np

from ._validation import (
    ConfigurationError,
    check_multiple,
    check_nonnegative,
    check_positive,
    check_positive_int,
)

#: Explicit 5-point stencil stability bound on ``k_d * dt / h**2``.
STABILITY_LIMIT = 0.25


@dataclass(frozen=True)
class RoomGeometry:
    """Room extents in meters. ``height`` is the vertical averaging range."""

    width: float
    length: float
    height: float
    cell_size: float = 0.1

    def __post_init__(self):
        for name in ("width", "length", "height", "cell_size"):
            object.__setattr__(self, name, check_positive(getattr(self, name), name))
        check_multiple(self.width, self.cell_size, "width")
        check_multiple(self.length, self.cell_size, "length")

    @property
    def shape(self) -> tuple[int, int]:
        return (
            check_multiple(self.width, self.cell_size, "width"),
            check_multiple(self.length, self.cell_size, "length"),
        )

    @property
    def cell_volume(self) -> float:
        return self.cell_size * self.cell_size * self.height

    def contains(self, point) -> bool:
        x, y = float(point[0]), float(point[1])
        return 0.0 <= x <= self.width and 0.0 <= y <= self.length

    def cell_of(self, point) -> tuple[int, int]:
        """Index of the cell containing ``point``; points on the far walls map inward."""
        if not self.contains(point):
            raise ConfigurationError(f"point {tuple(point)!r} lies outside the room")
        nx, ny = self.shape
        i = min(int(math.floor(point[0] / self.cell_size)), nx - 1)
        j = min(int(math.floor(point[1] / self.cell_size)), ny - 1)
        return i, j

    def cell_center(self, i: int, j: int) -> tuple[float, float]:
        return ((i + 0.5) * self.cell_size, (j + 0.5) * self.cell_size)


@dataclass(frozen=True)
class DiffusionParams:
    """Decayed-diffusion coefficients.

    ``k_t`` is a per-second decay base, so a step of ``dt`` seconds scales the
    field by ``k_t ** dt``. When ``k_d * dt / h**2`` exceeds the explicit
    stability limit the step is split into the minimal number of equal
    substeps, up to ``max_substeps``.
    """

    k_d: float = 0.003
    k_t: float = 0.98
    dt: float = 1.0
    max_substeps: int = 16

    def __post_init__(self):
        check_nonnegative(self.k_d, "k_d")
        check_positive(self.dt, "dt")
        if not (0.0 < self.k_t <= 1.0):
            raise ConfigurationError(f"k_t must lie in (0, 1], got {self.k_t!r}")
        check_positive_int(self.max_substeps, "max_substeps")

    def substeps(self, cell_size: float) -> int:
        ratio = self.k_d * self.dt / (cell_size * cell_size)
        n = max(1, math.ceil(ratio / STABILITY_LIMIT - 1e-12))
        if n > self.max_substeps:
            raise ConfigurationError(
                f"k_d*dt/h^2 = {ratio:.4g} needs {n} substeps to stay below "
                f"{STABILITY_LIMIT}; max_substeps is {self.max_substeps}"
            )
        return n


@dataclass(frozen=True)
class ConcentrationField:
    """Cell concentrations in PFU/m^3 at ``timestamp`` seconds."""

    geometry: RoomGeometry
    values: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != self.geometry.shape:
            raise ConfigurationError(
                f"field shape {values.shape} does not match geometry {self.geometry.shape}"
            )
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ConfigurationError("concentration values must be finite and non-negative")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def replace(self, values: np.ndarray, timestamp: float | None = None) -> "ConcentrationField":
        return ConcentrationField(
            self.geometry, values, self.timestamp if timestamp is None else timestamp
        )


@dataclass(frozen=True)
class CellSet:
    """A duplicate-free set of ``(row, col)`` cell indices."""

    cells: np.ndarray = dc_field(default_factory=lambda: np.empty((0, 2), dtype=int))

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=int).reshape(-1, 2)
        if len(np.unique(cells, axis=0)) != len(cells):
            raise ConfigurationError("cell set contains duplicate indices")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    def __len__(self) -> int:
        return len(self.cells)

    def check_bounds(self, shape: tuple[int, int]) -> None:
        if len(self.cells) == 0:
            return
        rows, cols = self.cells[:, 0], self.cells[:, 1]
        if rows.min() < 0 or cols.min() < 0 or rows.max() >= shape[0] or cols.max() >= shape[1]:
            raise IndexError(f"cell set has indices outside a grid of shape {shape}")

    def mask(self, shape: tuple[int, int]) -> np.ndarray:
        self.check_bounds(shape)
        out = np.zeros(shape, dtype=bool)
        if len(self.cells):
            out[self.cells[:, 0], self.cells[:, 1]] = True
        return out


def new_field(geometry: RoomGeometry) -> ConcentrationField:
    return ConcentrationField(geometry, np.zeros(geometry.shape), 0.0)


def laplacian(values: np.ndarray, cell_size: float) -> np.ndarray:
    """5-point Laplacian with zero-flux walls (ghost cells mirror the edge)."""
    p = np.pad(values, 1, mode="edge")
    # Pairwise grouping keeps the stencil exactly mirror-symmetric in floating point.
    neighbors = (p[:-2, 1:-1] + p[2:, 1:-1]) + (p[1:-1, :-2] + p[1:-1, 2:])
    return (neighbors - 4.0 * values) / (cell_size * cell_size)


def diffuse_values(values: np.ndarray, params: DiffusionParams, cell_size: float) -> np.ndarray:
    """Advance a raw array by one ``params.dt`` step of decayed diffusion."""
    n = params.substeps(cell_size)
    h = params.dt / n
    out = np.asarray(values, dtype=float)
    for _ in range(n):
        out = out + params.k_d * h * laplacian(out, cell_size)
    return out * params.k_t**params.dt


def step_diffuse(field: ConcentrationField, params: DiffusionParams) -> ConcentrationField:
    values = diffuse_values(field.values, params, field.geometry.cell_size)
    # Rounding can leave -1e-300 style residues; the exact update is non-negative.
    np.maximum(values, 0.0, out=values)
    return field.replace(values, field.timestamp + params.dt)


def split_removal(values: np.ndarray, k_f) -> tuple[np.ndarray, np.ndarray]:
    """Split ``values`` into ``(kept, removed)`` with ``kept + removed == values`` exactly.

    Whichever part is at least half of the original is formed by a Sterbenz-exact
    subtraction, so the cellwise sum reproduces the input bit for bit.
    """
    values = np.asarray(values, dtype=float)
    k_f = np.broadcast_to(np.asarray(k_f, dtype=float), values.shape)
    small = k_f <= 0.5
    kept_a = values - k_f * values
    removed_b = k_f * values
    kept = np.where(small, kept_a, values - removed_b)
    removed = np.where(small, values - kept_a, removed_b)
    return kept, removed


def apply_sink(
    field: ConcentrationField, footprint: CellSet, k_f: float
) -> tuple[ConcentrationField, ConcentrationField]:
    """Remove the fraction ``k_f`` of every footprint cell's content.

    Returns the reduced field and a field holding the removed amounts.
    """
    k_f = float(k_f)
    if k_f < 0.0:
        raise ConfigurationError(f"k_f must be non-negative, got {k_f!r}")
    if k_f > 1.0:
        warnings.warn(f"filter fraction {k_f:.4g} > 1 clamped to 1", RuntimeWarning, stacklevel=2)
        k_f = 1.0
    mask = footprint.mask(field.geometry.shape)
    kept, removed = split_removal(field.values, np.where(mask, k_f, 0.0))
    return field.replace(kept), field.replace(removed)


def total_virus(field: ConcentrationField) -> float:
    """Airborne virus in PFU: sum of cell concentrations times cell volume."""
    return float(field.values.sum() * field.geometry.cell_volume)


def filter_fraction(flow_q: float, dt: float, column_volume: float) -> tuple[float, bool]:
    """Per-step removal fraction ``Q*dt/V_r`` clamped to ``[0, 1]``.

    Returns ``(k_f, clamped)``.
    """
    check_nonnegative(flow_q, "flow_Q")
    k_f = flow_q * check_positive(dt, "dt") / check_positive(column_volume, "V_r")
    if k_f > 1.0:
        warnings.warn(f"Q*dt/V_r = {k_f:.4g} > 1 clamped to 1", RuntimeWarning, stacklevel=2)
        return 1.0, True
    return k_f, False


def rectangle_cells(geometry: RoomGeometry, center, size_x: float, size_y: float) -> CellSet:
    """Cells whose centers fall in the half-open rectangle around ``center``.

    Cells outside the room are dropped, so a footprint hanging over a wall
    covers only its in-room part.
    """
    h = geometry.cell_size
    nx, ny = geometry.shape
    cx, cy = float(center[0]), float(center[1])
    i0 = max(math.ceil((cx - size_x / 2) / h - 0.5), 0)
    i1 = min(math.ceil((cx + size_x / 2) / h - 0.5), nx)
    j0 = max(math.ceil((cy - size_y / 2) / h - 0.5), 0)
    j1 = min(math.ceil((cy + size_y / 2) / h - 0.5), ny)
    if i0 >= i1 or j0 >= j1:
        return CellSet()
    ii, jj = np.meshgrid(np.arange(i0, i1), np.arange(j0, j1), indexing="ij")
    return CellSet(np.column_stack([ii.ravel(), jj.ravel()]))
