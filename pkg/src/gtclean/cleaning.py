"""Elimination levels L1 (geometry and masks), L2 (NDVI peak) and L3 (clusters)."""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .geometry import bbox, bboxes_intersect, overlap_error_bound, overlap_fraction
from .kmeans import ClusterFlag, ClusterModel
from .model import (
    NON_AG, UNKNOWN, CleanProfile, Dataset, EliminationRecord, Level, PlotRecord, Reason,
)


@dataclass(frozen=True)
class L1Config:
    mask_overlap_max: float = 0.05
    plot_overlap_max: float = 0.25
    grid_resolution: int = 256

    def __post_init__(self):
        for name in ("mask_overlap_max", "plot_overlap_max"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.grid_resolution < 32:
            raise ValueError("grid_resolution must be >= 32")


def _exceeds(frac: float, limit: float, resolution: int) -> bool:
    # only eliminate when the estimate clears the limit by more than its error bound
    return frac > limit + overlap_error_bound(resolution)


def l1_filter(dataset: Dataset, cfg: L1Config = L1Config()) -> tuple[list[PlotRecord], list[EliminationRecord]]:
    """Drop plots with sentinel labels, mask contact or mutual overlap.

    All tests run against the original plot set, so the outcome does not
    depend on iteration order. Pairwise overlap eliminates both plots.
    """
    plots = [dataset.plots[k] for k in sorted(dataset.plots)]
    res = cfg.grid_resolution
    boxes = {p.plot_id: bbox(p.polygon) for p in plots}
    reasons: dict[str, tuple[Reason, str]] = {}

    def mark(pid, reason, detail):
        if pid not in reasons:
            reasons[pid] = (reason, detail)

    for p in plots:
        if p.claimed_label == UNKNOWN:
            mark(p.plot_id, Reason.UNKNOWN_LABEL, "label not in configured crop list")
        elif p.claimed_label == NON_AG:
            mark(p.plot_id, Reason.NON_AG_LABEL, "claimed non-agricultural")

    mask_polys = [(m.kind, ring, bbox(ring)) for m in dataset.masks for ring in m.polygons]
    for p in plots:
        for kind, ring, mb in mask_polys:
            if not bboxes_intersect(boxes[p.plot_id], mb):
                continue
            frac = overlap_fraction(p.polygon, ring, res)
            if _exceeds(frac, cfg.mask_overlap_max, res):
                mark(p.plot_id, Reason.MASK_OVERLAP, f"{kind.value} covers {frac:.3f}")
                break

    for i, a in enumerate(plots):
        for b in plots[i + 1:]:
            if not bboxes_intersect(boxes[a.plot_id], boxes[b.plot_id]):
                continue
            fab = overlap_fraction(a.polygon, b.polygon, res)
            fba = overlap_fraction(b.polygon, a.polygon, res)
            if _exceeds(max(fab, fba), cfg.plot_overlap_max, res):
                mark(a.plot_id, Reason.PLOT_OVERLAP, f"overlaps {b.plot_id} ({fab:.3f})")
                mark(b.plot_id, Reason.PLOT_OVERLAP, f"overlaps {a.plot_id} ({fba:.3f})")

    records = [EliminationRecord(pid, Level.L1, r, d) for pid, (r, d) in sorted(reasons.items())]
    retained = [p for p in plots if p.plot_id not in reasons]
    return retained, records


def _decimate(profiles: Sequence[CleanProfile], kept: set[str], plot_sizes: dict[str, int],
              survival_min: float, level: Level, reason: Reason):
    """Drop whole plots whose surviving pixel fraction falls below ``survival_min``."""
    surviving = Counter(p.plot_id for p in profiles if p.pixel_id in kept)
    records = []
    dead = set()
    for plot_id in sorted(plot_sizes):
        frac = surviving.get(plot_id, 0) / plot_sizes[plot_id]
        if frac < survival_min:
            dead.add(plot_id)
            records.append(EliminationRecord(
                plot_id, level, reason, f"{surviving.get(plot_id, 0)}/{plot_sizes[plot_id]} pixels survive"))
    retained = [p for p in profiles if p.pixel_id in kept and p.plot_id not in dead]
    return retained, records


def l2_filter(profiles: Sequence[CleanProfile], ndvi_max_min: float = 0.40,
              plot_survival_min: float = 0.3) -> tuple[list[CleanProfile], list[EliminationRecord]]:
    """Keep pixels whose NDVI peak reaches ``ndvi_max_min``."""
    records, kept = [], set()
    sizes = Counter(p.plot_id for p in profiles)
    for p in profiles:
        peak = float(np.max(p.ndvi))
        if peak >= ndvi_max_min:
            kept.add(p.pixel_id)
        else:
            records.append(EliminationRecord(
                p.pixel_id, Level.L2, Reason.L2_LOW_NDVI, f"max NDVI {peak:.3f}", "pixel"))
    retained, plot_records = _decimate(profiles, kept, sizes, plot_survival_min,
                                       Level.L2, Reason.L2_PLOT_DECIMATED)
    return retained, records + plot_records


def temporal_variance(ndvi: np.ndarray) -> np.ndarray:
    return np.atleast_2d(ndvi).var(axis=1)


def roughness(ndvi: np.ndarray) -> np.ndarray:
    """Mean squared second difference along time, per row."""
    x = np.atleast_2d(ndvi)
    if x.shape[1] < 3:
        return np.zeros(x.shape[0])
    d2 = x[:, 2:] - 2 * x[:, 1:-1] + x[:, :-2]
    return (d2 ** 2).mean(axis=1)


def cluster_stats(model: ClusterModel, ndvi: np.ndarray) -> dict[int, tuple[float, float, int]]:
    """Per cluster: (mean temporal variance, mean roughness, size)."""
    var = temporal_variance(ndvi)
    rough = roughness(ndvi)
    out = {}
    for j in range(model.k):
        members = model.labels == j
        n = int(members.sum())
        out[j] = (float(var[members].mean()) if n else 0.0, float(rough[members].mean()) if n else 0.0, n)
    return out


def flag_clusters(model: ClusterModel, ndvi, flat_var_max: float = 0.005,
                  rough_min: float = 0.01) -> ClusterModel:
    """FLAT when mean variance < flat_var_max, NOISY when mean roughness >
    rough_min; FLAT takes precedence."""
    ndvi = np.asarray(ndvi, dtype=np.float64)
    flags = {}
    for j, (v, r, n) in cluster_stats(model, ndvi).items():
        if n and v < flat_var_max:
            flags[j] = ClusterFlag.FLAT
        elif n and r > rough_min:
            flags[j] = ClusterFlag.NOISY
        else:
            flags[j] = ClusterFlag.OK
    return model.with_flags(flags)


def l3_filter(profiles: Sequence[CleanProfile], model: ClusterModel,
              plot_survival_min: float = 0.3) -> tuple[list[CleanProfile], list[EliminationRecord]]:
    """Drop pixels in FLAT or NOISY clusters, then decimate thin plots.

    ``profiles`` must be in the same order the model was fitted on.
    """
    if len(profiles) != len(model.labels):
        raise ValueError("profiles and cluster assignment differ in length")
    reason_of = {ClusterFlag.FLAT: Reason.L3_FLAT, ClusterFlag.NOISY: Reason.L3_NOISY}
    records, kept = [], set()
    for p, lab in zip(profiles, model.labels.tolist()):
        flag = model.flags.get(lab, ClusterFlag.OK)
        if flag == ClusterFlag.OK:
            kept.add(p.pixel_id)
        else:
            records.append(EliminationRecord(
                p.pixel_id, Level.L3, reason_of[flag], f"cluster {lab}", "pixel"))
    sizes = Counter(p.plot_id for p in profiles)
    retained, plot_records = _decimate(profiles, kept, sizes, plot_survival_min,
                                       Level.L3, Reason.L3_PLOT_DECIMATED)
    return retained, records + plot_records


def group_by_plot(profiles: Iterable[CleanProfile]) -> dict[str, list[CleanProfile]]:
    out = defaultdict(list)
    for p in profiles:
        out[p.plot_id].append(p)
    return dict(out)


def kmeans_inertia_sweep(ndvi, ks, seed: int, max_iter: int = 300, n_init: int = 10) -> list[tuple[int, float]]:
    """Final inertia for each k; a diagnostic only, no k is chosen from it."""
    from .kmeans import kmeans

    X = np.asarray(ndvi, dtype=np.float64)
    n_distinct = np.unique(X, axis=0).shape[0]
    return [(k, kmeans(X, k, seed=seed, max_iter=max_iter, n_init=n_init).inertia) for k in ks if k <= n_distinct]
