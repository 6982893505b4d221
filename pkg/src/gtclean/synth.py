"""Deterministic synthetic GT datasets with a known error taxonomy.

Each crop follows a double-logistic NDVI curve. Band reflectances are linear
in that curve; NIR and RED share a constant sum, so NDVI derived from the
noise-free bands equals the curve exactly.

Corruptions are applied to disjoint plot subsets in a fixed order, each
count being ``round(rate * remaining)`` drawn from one seeded permutation:
non-agricultural, perennial, multi-crop, then mislabelled.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .evaluation import round_half_up
from .ingest import masks_to_geojson, pixels_to_csv, plots_to_geojson
from .model import BANDS, MaskKind, MaskLayer, PixelProfile, PlotRecord, TimeGrid

NON_AG_TRUTH = "NON_AG"
PERENNIAL_TRUTH = "PERENNIAL"
MULTI_CROP_TRUTH = "MULTI_CROP"

NON_AG_LEVEL = 0.1
PERENNIAL_LEVEL = 0.6

PLOT_SIZE = 0.001  # degrees
PLOT_GAP = 0.0005
ORIGIN = (77.0, 25.0)

# NIR = 0.25 + 0.25 v and RED = 0.25 - 0.25 v give NDVI == v
_NIR = (0.25, 0.25)
_RED = (-0.25, 0.25)


@dataclass(frozen=True)
class PhenologyParams:
    name: str
    base: float
    amplitude: float
    greenup_day: float
    greenup_rate: float
    senescence_day: float
    senescence_rate: float
    # (gain, offset) per band in BANDS order
    band_maps: tuple = ()

    def __post_init__(self):
        if not 0.0 <= self.base <= 0.3:
            raise ValueError(f"{self.name}: base NDVI must be in [0, 0.3]")
        if not 0.2 <= self.amplitude <= 0.7:
            raise ValueError(f"{self.name}: amplitude must be in [0.2, 0.7]")
        if not self.greenup_day < self.senescence_day:
            raise ValueError(f"{self.name}: green-up must precede senescence")
        for gain, offset in self.band_maps:
            lo, hi = sorted((offset, offset + gain))
            if lo < 0 or hi > 1:
                raise ValueError(f"{self.name}: band map leaves [0, 1] reflectance")


def _maps(green, blue, swir2):
    return (_RED, green, blue, _NIR, swir2)


DEFAULT_PHENOLOGY = (
    PhenologyParams("mustard", 0.15, 0.55, 40, 0.15, 120, 0.12,
                    _maps((0.06, 0.08), (-0.03, 0.07), (-0.20, 0.28))),
    PhenologyParams("paddy", 0.10, 0.60, 25, 0.12, 95, 0.12,
                    _maps((0.02, 0.06), (-0.02, 0.05), (-0.22, 0.24))),
    PhenologyParams("wheat", 0.12, 0.60, 65, 0.10, 145, 0.10,
                    _maps((0.03, 0.09), (-0.04, 0.08), (-0.18, 0.32))),
)

BACKGROUND_MAPS = _maps((0.00, 0.10), (-0.02, 0.08), (-0.20, 0.35))


@dataclass(frozen=True)
class NoiseSpec:
    mislabel_rate: float = 0.0
    non_ag_rate: float = 0.0
    perennial_rate: float = 0.0
    boundary_pixel_rate: float = 0.0
    cloud_rate: float = 0.0
    multi_crop_polygon_rate: float = 0.0
    reflectance_noise_sd: float = 0.0

    def __post_init__(self):
        for k, v in self.__dict__.items():
            if k != "reflectance_noise_sd" and not 0.0 <= v <= 1.0:
                raise ValueError(f"{k} must be in [0, 1], got {v}")
        if self.reflectance_noise_sd < 0:
            raise ValueError("reflectance_noise_sd must be >= 0")


def _logistic(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -700, 700)))


def phenology_curve(params: PhenologyParams, days) -> np.ndarray:
    """Double-logistic NDVI at ``days`` (array or TimeGrid)."""
    t = np.asarray(days.days if isinstance(days, TimeGrid) else days, dtype=np.float64)
    rise = _logistic(params.greenup_rate * (t - params.greenup_day))
    fall = _logistic(params.senescence_rate * (t - params.senescence_day))
    return params.base + params.amplitude * (rise - fall)


def bands_from_curve(curve: np.ndarray, band_maps) -> np.ndarray:
    """(5, T) reflectance, one linear map per band."""
    return np.vstack([g * curve + o for g, o in band_maps])


@dataclass
class SynthDataset:
    plots: list[PlotRecord]
    pixels: list[PixelProfile]
    masks: list[MaskLayer]
    truth: dict[str, str]
    true_crop: dict[str, str]
    seeds: list[tuple[str, str]]
    grid: TimeGrid
    boundary_pixels: set = field(default_factory=set)

    def files(self) -> dict[str, str]:
        seeds = io.StringIO()
        w = csv.writer(seeds, lineterminator="\n")
        w.writerow(["plot_id", "verified_crop"])
        w.writerows(self.seeds)
        truth = io.StringIO()
        w = csv.writer(truth, lineterminator="\n")
        w.writerow(["plot_id", "true_condition"])
        w.writerows(sorted(self.truth.items()))
        return {
            "plots.geojson": plots_to_geojson(self.plots),
            "pixels.csv": pixels_to_csv(self.pixels),
            "masks.geojson": masks_to_geojson(self.masks),
            "truth.csv": truth.getvalue(),
            "seeds.csv": seeds.getvalue(),
        }

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in self.files().items():
            (out / name).write_text(text, encoding="utf-8")
        return out

    def is_clean(self, plot_id: str) -> bool:
        """True crop and correctly labelled."""
        claimed = next(p.claimed_label for p in self.plots if p.plot_id == plot_id)
        return self.truth[plot_id] == claimed


def read_truth(path) -> dict[str, str]:
    with open(path, newline="", encoding="utf-8") as f:
        return {r["plot_id"]: r["true_condition"] for r in csv.DictReader(f)}


def _square(x0, y0, size):
    return ((x0, y0), (x0 + size, y0), (x0 + size, y0 + size), (x0, y0 + size))


def _layout(n_plots: int, pixels_per_plot: int):
    cols = math.ceil(math.sqrt(n_plots))
    pw = math.ceil(math.sqrt(pixels_per_plot))
    ph = math.ceil(pixels_per_plot / pw)
    return cols, pw, ph


def generate_dataset(n_plots_per_crop: int = 10, pixels_per_plot: int = 20,
                     params: Sequence[PhenologyParams] = DEFAULT_PHENOLOGY,
                     noise: NoiseSpec = NoiseSpec(), grid: TimeGrid = TimeGrid(), seed: int = 0,
                     acquisition_step: int = 5, seeds_per_crop: int = 10, n_districts: int = 4,
                     season_year: int = 2024) -> SynthDataset:
    if n_plots_per_crop < 1 or pixels_per_plot < 1 or not params:
        raise ValueError("synthetic dataset needs at least one crop, plot and pixel")
    if acquisition_step < 1:
        raise ValueError("acquisition_step must be positive")
    s_select, s_noise, s_cloud, s_seed = np.random.SeedSequence(seed).spawn(4)
    r_select = np.random.default_rng(s_select)
    r_noise = np.random.default_rng(s_noise)
    r_cloud = np.random.default_rng(s_cloud)
    r_seed = np.random.default_rng(s_seed)

    crops = [p.name for p in params]
    by_name = {p.name: p for p in params}
    n_plots = n_plots_per_crop * len(crops)
    acq_days = np.arange(grid.start_day, grid.end_day + 1, acquisition_step)

    plot_ids = [f"p{k:05d}" for k in range(n_plots)]
    assigned = [crops[k // n_plots_per_crop] for k in range(n_plots)]

    # corruption subsets, disjoint, in fixed order
    remaining = list(r_select.permutation(n_plots))
    subsets = {}
    for name, rate in (("non_ag", noise.non_ag_rate), ("perennial", noise.perennial_rate),
                       ("multi_crop", noise.multi_crop_polygon_rate), ("mislabel", noise.mislabel_rate)):
        n = round_half_up(rate * len(remaining))
        subsets[name] = set(int(i) for i in remaining[:n])
        remaining = remaining[n:]

    curves = {c: bands_from_curve(phenology_curve(by_name[c], acq_days), by_name[c].band_maps) for c in crops}
    background = bands_from_curve(np.full(acq_days.size, NON_AG_LEVEL), BACKGROUND_MAPS)
    perennial = bands_from_curve(np.full(acq_days.size, PERENNIAL_LEVEL), BACKGROUND_MAPS)

    cols, pw, ph = _layout(n_plots, pixels_per_plot)
    slots = [(r, c) for r in range(ph) for c in range(pw)][:pixels_per_plot]
    edge = [j for j, (r, c) in enumerate(slots) if r in (0, ph - 1) or c in (0, pw - 1)]
    inner = [j for j in range(len(slots)) if j not in edge]
    n_boundary = round_half_up(noise.boundary_pixel_rate * pixels_per_plot)

    plots, pixels, truth, true_crop, boundary_pixels = [], [], {}, {}, set()
    for k, pid in enumerate(plot_ids):
        crop = assigned[k]
        claimed = crop
        base = [curves[crop]] * pixels_per_plot
        if k in subsets["non_ag"]:
            condition = NON_AG_TRUTH
            base = [background] * pixels_per_plot
        elif k in subsets["perennial"]:
            condition = PERENNIAL_TRUTH
            base = [perennial] * pixels_per_plot
        elif k in subsets["multi_crop"]:
            condition = MULTI_CROP_TRUTH
            other = crops[(crops.index(crop) + 1 + int(r_select.integers(len(crops) - 1))) % len(crops)] \
                if len(crops) > 1 else crop
            half = pixels_per_plot // 2
            base = [curves[other]] * half + [curves[crop]] * (pixels_per_plot - half)
        else:
            condition = crop
            if k in subsets["mislabel"] and len(crops) > 1:
                claimed = crops[(crops.index(crop) + 1 + int(r_select.integers(len(crops) - 1))) % len(crops)]
        truth[pid] = condition
        true_crop[pid] = crop

        if n_boundary:
            order = [edge[i] for i in r_select.permutation(len(edge))] + \
                    [inner[i] for i in r_select.permutation(len(inner))]
            bset = set(order[:n_boundary])
        else:
            bset = set()

        gx, gy = k % cols, k // cols
        x0 = ORIGIN[0] + gx * (PLOT_SIZE + PLOT_GAP)
        y0 = ORIGIN[1] + gy * (PLOT_SIZE + PLOT_GAP)
        px_ids = []
        for j, (r, c) in enumerate(slots):
            row, col = gy * (ph + 1) + r, gx * (pw + 1) + c
            px_id = f"{row}_{col}"
            vals = base[j]
            if j in bset:
                vals = 0.5 * vals + 0.5 * background
                boundary_pixels.add(px_id)
            if noise.reflectance_noise_sd > 0:
                vals = vals + r_noise.normal(0.0, noise.reflectance_noise_sd, size=vals.shape)
            vals = np.clip(vals, 0.0, 1.0)
            cloudy = r_cloud.random(acq_days.size) < noise.cloud_rate if noise.cloud_rate > 0 \
                else np.zeros(acq_days.size, dtype=bool)
            if cloudy.any():
                vals = vals.copy()
                vals[:, cloudy] = 0.4 + 0.2 * r_cloud.random((len(BANDS), int(cloudy.sum())))
            pixels.append(PixelProfile(px_id, pid, acq_days, vals, cloudy, row, col))
            px_ids.append(px_id)
        plots.append(PlotRecord(
            plot_id=pid, polygon=_square(x0, y0, PLOT_SIZE), claimed_label=claimed,
            district=f"D{gy % n_districts + 1}", season_year=season_year, pixel_ids=tuple(px_ids),
        ))

    # roads run along the gaps between plot rows and never touch a plot
    n_rows = math.ceil(n_plots / cols)
    width = cols * (PLOT_SIZE + PLOT_GAP)
    roads = []
    for gy in range(n_rows - 1):
        y = ORIGIN[1] + gy * (PLOT_SIZE + PLOT_GAP) + PLOT_SIZE + 0.3 * PLOT_GAP
        roads.append(((ORIGIN[0], y), (ORIGIN[0] + width, y), (ORIGIN[0] + width, y + 0.4 * PLOT_GAP),
                      (ORIGIN[0], y + 0.4 * PLOT_GAP)))
    masks = [MaskLayer(MaskKind.ROAD, tuple(roads))] if roads else []

    seeds = []
    for crop in crops:
        clean = [pid for k, pid in enumerate(plot_ids) if truth[pid] == crop and assigned[k] == crop
                 and plots[k].claimed_label == crop]
        pick = r_seed.permutation(len(clean))[:seeds_per_crop]
        seeds.extend((clean[i], crop) for i in sorted(pick))

    return SynthDataset(plots, pixels, masks, truth, true_crop, seeds, grid, boundary_pixels)
