"""Per-pixel signal conditioning: cloud removal, resampling, smoothing, NDVI."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import BAND_INDEX, CleanProfile, EliminationRecord, Level, PixelProfile, Reason, TimeGrid


class TooSparse(Exception):
    """Raised when a pixel has too few clear samples to be resampled."""


@dataclass(frozen=True)
class PreprocessConfig:
    smooth_window: int = 3
    min_clear_fraction: float = 0.5


@dataclass
class NdviWarnings:
    """Counts elements whose NIR + RED denominator was not positive."""

    zero_denominator: int = 0


def drop_cloudy(profile: PixelProfile) -> tuple[PixelProfile, int]:
    keep = ~profile.cloudy
    removed = int(profile.cloudy.sum())
    if removed == 0:
        return profile, 0
    out = PixelProfile(
        profile.pixel_id, profile.plot_id, profile.days[keep], profile.values[:, keep],
        profile.cloudy[keep], profile.row, profile.col,
    )
    return out, removed


def min_clear_samples(n_observable: int, fraction: float = 0.5) -> int:
    return max(2, math.ceil(fraction * n_observable))


def resample_linear(profile: PixelProfile, grid: TimeGrid, min_samples: int = 2) -> np.ndarray:
    """Linear interpolation of every band onto the grid days.

    Outside the sampled range the nearest boundary value is held constant.
    Returns a (5, n_steps) array.
    """
    n = len(profile)
    if n < max(2, min_samples):
        raise TooSparse(f"{n} clear samples, need {max(2, min_samples)}")
    days = profile.days.astype(np.float64)
    target = grid.days.astype(np.float64)
    # np.interp holds the end values constant outside [days[0], days[-1]]
    return np.vstack([np.interp(target, days, band) for band in profile.values])


def smooth(series, window: int = 3) -> np.ndarray:
    """Centred moving average; the window shrinks at the edges."""
    x = np.asarray(series, dtype=np.float64)
    if window < 1 or window % 2 == 0:
        raise ValueError(f"smoothing window must be odd and >= 1, got {window}")
    if window > x.size:
        raise ValueError(f"smoothing window {window} exceeds series length {x.size}")
    if window == 1:
        return x.copy()
    half = window // 2
    csum = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(x.size)
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half + 1, x.size)
    return (csum[hi] - csum[lo]) / (hi - lo)


def compute_ndvi(nir, red, warnings: NdviWarnings | None = None) -> np.ndarray:
    nir = np.asarray(nir, dtype=np.float64)
    red = np.asarray(red, dtype=np.float64)
    if nir.shape != red.shape:
        raise ValueError(f"nir/red length mismatch: {nir.shape} vs {red.shape}")
    denom = nir + red
    bad = ~(denom > 0)
    if warnings is not None:
        warnings.zero_denominator += int(bad.sum())
    out = np.zeros_like(denom)
    np.divide(nir - red, denom, out=out, where=~bad)
    return out


def preprocess_pixel(profile: PixelProfile, grid: TimeGrid, config: PreprocessConfig = PreprocessConfig(),
                     n_observable: int | None = None,
                     warnings: NdviWarnings | None = None) -> CleanProfile | EliminationRecord:
    """drop_cloudy -> resample_linear -> smooth each band -> NDVI.

    ``n_observable`` is the run-wide acquisition count used by the sparsity
    gate; when omitted the pixel's own sample count stands in for it.
    """
    clear, _ = drop_cloudy(profile)
    n_obs = len(profile) if n_observable is None else n_observable
    need = min_clear_samples(n_obs, config.min_clear_fraction)
    try:
        bands = resample_linear(clear, grid, need)
    except TooSparse as e:
        return EliminationRecord(profile.pixel_id, Level.PRE, Reason.TOO_SPARSE, str(e), "pixel")
    if config.smooth_window > 1:
        bands = np.vstack([smooth(b, config.smooth_window) for b in bands])
    ndvi = compute_ndvi(bands[BAND_INDEX["NIR"]], bands[BAND_INDEX["RED"]], warnings)
    bands.setflags(write=False)
    ndvi.setflags(write=False)
    return CleanProfile(profile.pixel_id, profile.plot_id, bands, ndvi, profile.row, profile.col)
