"""False colour composite chips (NIR, RED, GREEN -> R, G, B) for human review."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from .model import BAND_INDEX, CleanProfile

FCC_BANDS = ("NIR", "RED", "GREEN")


class NoSpatialLayout(ValueError):
    pass


def stretch(values: np.ndarray, valid: np.ndarray, lower: float = 2, upper: float = 98) -> np.ndarray:
    """Linear percentile stretch to 0..255 over the ``valid`` cells.

    A band with no spread maps to 127.
    """
    out = np.zeros(values.shape, dtype=np.uint8)
    v = values[valid]
    lo, hi = np.percentile(v, [lower, upper])
    if hi <= lo:
        out[valid] = 127
        return out
    scaled = (values - lo) * 255.0 / (hi - lo)
    out[valid] = np.clip(np.rint(scaled[valid]), 0, 255).astype(np.uint8)
    return out


def render_fcc_chip(profiles: Sequence[CleanProfile], timestep: int, out_size: int = 64) -> np.ndarray:
    """Render one plot's pixels at ``timestep`` as an (out_size, out_size, 3)
    uint8 image. Cells with no pixel stay black."""
    if not profiles:
        raise ValueError("no pixels to render")
    if any(p.row is None or p.col is None for p in profiles):
        raise NoSpatialLayout("FCC export needs pixel positions: add row,col columns "
                              "to the pixel file or use '<row>_<col>' pixel ids")
    rows = np.array([p.row for p in profiles])
    cols = np.array([p.col for p in profiles])
    r0, c0 = rows.min(), cols.min()
    h, w = rows.max() - r0 + 1, cols.max() - c0 + 1
    valid = np.zeros((h, w), dtype=bool)
    valid[rows - r0, cols - c0] = True
    chip = np.zeros((h, w, 3), dtype=np.uint8)
    for ch, band in enumerate(FCC_BANDS):
        grid = np.zeros((h, w))
        grid[rows - r0, cols - c0] = [p.bands[BAND_INDEX[band], timestep] for p in profiles]
        chip[:, :, ch] = stretch(grid, valid)
    # nearest-neighbour upsampling
    ri = (np.arange(out_size) * h // out_size)
    ci = (np.arange(out_size) * w // out_size)
    return chip[ri][:, ci]


def write_png(image: np.ndarray, path) -> Path:
    path = Path(path)
    Image.fromarray(np.ascontiguousarray(image, dtype=np.uint8)).save(path, format="PNG")
    return path
