"""Heatmap output as 8-bit portable graymaps with a scale sidecar."""
from __future__ import annotations

from pathlib import Path

import numpy as np


def write_pgm(path, values, scale: float | None = None) -> float:
    """Write ``values`` as a binary (P5) 8-bit graymap and return the scale used.

    Pixel = round(255 * value / scale), clipped to [0, 255]; ``scale`` defaults
    to the array maximum (1.0 for an all-zero array). Grid axis 0 becomes
    image rows. A sidecar ``<path>.txt`` records the scale in PFU/m^3.
    """
    values = np.asarray(values, dtype=float)
    if scale is None:
        peak = float(values.max()) if values.size else 0.0
        scale = peak if peak > 0 else 1.0
    pixels = np.clip(np.rint(255.0 * values / scale), 0, 255).astype(np.uint8)
    rows, cols = pixels.shape
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())
    Path(str(path) + ".txt").write_text(
        f"file = {path.name}\n"
        f"pixel_255_equals_PFU_per_m3 = {scale!r}\n"
        f"rows_axis = x (facing direction), cols_axis = y (lateral)\n"
    )
    return scale


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary graymap")
    cols, rows, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit graymaps are supported")
    return np.frombuffer(parts[4], dtype=np.uint8, count=rows * cols).reshape(rows, cols)
