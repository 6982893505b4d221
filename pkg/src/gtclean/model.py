"""Domain types shared by every pipeline stage."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np

BANDS = ("RED", "GREEN", "BLUE", "NIR", "SWIR2")
BAND_INDEX = {b: i for i, b in enumerate(BANDS)}

# Sentinel labels; never used as classifier targets.
NON_AG = "NON_AG"
UNKNOWN = "UNKNOWN"
SENTINELS = (NON_AG, UNKNOWN)

DEFAULT_CROPS = ("mustard", "paddy", "wheat")


class Level(str, Enum):
    PRE = "PRE"
    L1 = "L1"
    L2 = "L2"
    L3 = "L3"
    VERIFY = "VERIFY"


class Reason(str, Enum):
    # pre-L1 hygiene
    NO_PIXELS = "NO_PIXELS"
    TOO_SPARSE = "TOO_SPARSE"
    # L1
    UNKNOWN_LABEL = "UNKNOWN_LABEL"
    NON_AG_LABEL = "NON_AG_LABEL"
    MASK_OVERLAP = "MASK_OVERLAP"
    PLOT_OVERLAP = "PLOT_OVERLAP"
    # L2
    L2_LOW_NDVI = "L2_LOW_NDVI"
    L2_PLOT_DECIMATED = "L2_PLOT_DECIMATED"
    # L3
    L3_FLAT = "L3_FLAT"
    L3_NOISY = "L3_NOISY"
    L3_PLOT_DECIMATED = "L3_PLOT_DECIMATED"
    # verification
    VERIFY_FLAGGED = "VERIFY_FLAGGED"


REASONS_BY_LEVEL = {
    Level.PRE: {Reason.NO_PIXELS, Reason.TOO_SPARSE},
    Level.L1: {Reason.UNKNOWN_LABEL, Reason.NON_AG_LABEL, Reason.MASK_OVERLAP, Reason.PLOT_OVERLAP},
    Level.L2: {Reason.L2_LOW_NDVI, Reason.L2_PLOT_DECIMATED},
    Level.L3: {Reason.L3_FLAT, Reason.L3_NOISY, Reason.L3_PLOT_DECIMATED},
    Level.VERIFY: {Reason.VERIFY_FLAGGED},
}


class MaskKind(str, Enum):
    ROAD = "ROAD"
    BUILT = "BUILT"
    NON_AG = "NON_AG"


Ring = tuple[tuple[float, float], ...]


def as_ring(points: Sequence[Sequence[float]]) -> Ring:
    """Normalise a vertex list to a tuple ring without the closing duplicate."""
    ring = tuple((float(x), float(y)) for x, y in points)
    if len(ring) > 1 and ring[0] == ring[-1]:
        ring = ring[:-1]
    return ring


def normalize_label(raw: str, crops: Sequence[str]) -> str:
    """Map a free-text crop string onto the configured label set."""
    s = raw.strip().lower()
    for c in crops:
        if s == c.lower():
            return c
    if s in ("non_ag", "non-ag", "nonag", "non agricultural"):
        return NON_AG
    return UNKNOWN


@dataclass(frozen=True)
class TimeGrid:
    start_day: int = 0
    step_days: int = 10
    n_steps: int = 19

    def __post_init__(self):
        if self.step_days <= 0:
            raise ValueError("step_days must be positive")
        if self.n_steps < 2:
            raise ValueError("n_steps must be >= 2")

    @property
    def days(self) -> np.ndarray:
        return self.start_day + self.step_days * np.arange(self.n_steps)

    @property
    def end_day(self) -> int:
        return self.start_day + self.step_days * (self.n_steps - 1)


class BandSample(NamedTuple):
    day: int
    reflectance: float
    cloudy: bool


@dataclass(frozen=True, eq=False)
class PixelProfile:
    """One pixel's multi-band time series.

    Stored columnar: ``days`` (n,), ``values`` (5, n) in ``BANDS`` order and
    ``cloudy`` (n,). Arrays are made read-only on construction.
    """

    pixel_id: str
    plot_id: str
    days: np.ndarray
    values: np.ndarray
    cloudy: np.ndarray
    row: int | None = None
    col: int | None = None

    def __post_init__(self):
        days = np.asarray(self.days, dtype=np.int64)
        values = np.asarray(self.values, dtype=np.float64).reshape(len(BANDS), -1)
        cloudy = np.asarray(self.cloudy, dtype=bool)
        if values.shape[1] != days.size or cloudy.size != days.size:
            raise ValueError(f"pixel {self.pixel_id}: band/day length mismatch")
        if days.size > 1 and np.any(np.diff(days) <= 0):
            raise ValueError(f"pixel {self.pixel_id}: days must be strictly increasing")
        if np.any(values < 0):
            raise ValueError(f"pixel {self.pixel_id}: negative reflectance")
        for a in (days, values, cloudy):
            a.setflags(write=False)
        object.__setattr__(self, "days", days)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "cloudy", cloudy)

    def __len__(self) -> int:
        return int(self.days.size)

    def samples(self, band: str) -> list[BandSample]:
        i = BAND_INDEX[band]
        return [
            BandSample(int(d), float(v), bool(c))
            for d, v, c in zip(self.days, self.values[i], self.cloudy)
        ]

    @property
    def bands(self) -> dict[str, list[BandSample]]:
        return {b: self.samples(b) for b in BANDS}


@dataclass(frozen=True)
class PlotRecord:
    plot_id: str
    polygon: Ring
    claimed_label: str
    district: str = ""
    season_year: int = 0
    pixel_ids: tuple[str, ...] = ()

    def with_pixels(self, pixel_ids) -> "PlotRecord":
        return PlotRecord(
            self.plot_id, self.polygon, self.claimed_label, self.district,
            self.season_year, tuple(pixel_ids),
        )


@dataclass(frozen=True)
class MaskLayer:
    kind: MaskKind
    polygons: tuple[Ring, ...] = ()


@dataclass(frozen=True)
class EliminationRecord:
    subject_id: str
    level: Level
    reason: Reason
    detail: str = ""
    granularity: str = "plot"  # "plot" or "pixel"

    def __post_init__(self):
        if self.reason not in REASONS_BY_LEVEL[self.level]:
            raise ValueError(f"reason {self.reason.value} not valid at level {self.level.value}")


@dataclass(frozen=True, eq=False)
class CleanProfile:
    """A pixel resampled onto the run's TimeGrid: bands (5, T) and NDVI (T,)."""

    pixel_id: str
    plot_id: str
    bands: np.ndarray
    ndvi: np.ndarray
    row: int | None = None
    col: int | None = None

    def features(self) -> np.ndarray:
        """Band profiles followed by NDVI, length 6*T."""
        return np.concatenate([self.bands.ravel(), self.ndvi])


@dataclass
class Dataset:
    plots: dict[str, PlotRecord]
    pixels: dict[str, PixelProfile]
    masks: list[MaskLayer]
    grid: TimeGrid
    eliminations: list[EliminationRecord] = field(default_factory=list)

    def pixels_of(self, plot_id: str) -> list[PixelProfile]:
        return [self.pixels[p] for p in self.plots[plot_id].pixel_ids]

    @property
    def n_observable(self) -> int:
        """Number of distinct acquisition days across the whole run."""
        days = set()
        for px in self.pixels.values():
            days.update(px.days.tolist())
        return len(days)
