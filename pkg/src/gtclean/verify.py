"""Median spectral benchmarks and three-metric label verification."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .model import CleanProfile

METRICS = ("COSINE", "PEARSON", "MANHATTAN")
TIE_TOL = 1e-12


class Decision(str, Enum):
    CONFIRMED = "CONFIRMED"
    FLAGGED = "FLAGGED"


class UndefinedScore(ValueError):
    """A metric is undefined for the given vectors (zero norm, constant)."""


@dataclass(frozen=True, eq=False)
class SpectralEmbedding:
    plot_id: str
    vector: np.ndarray


@dataclass(frozen=True, eq=False)
class MedianProfile:
    crop: str
    vector: np.ndarray
    support: int


@dataclass(frozen=True)
class Verdict:
    plot_id: str
    claimed: str
    votes: dict
    decision: Decision
    district: str = ""


def embed_plot(plot_id: str, profiles: Sequence[CleanProfile]) -> SpectralEmbedding:
    """Per-band, per-timestep mean over the plot's pixels, bands concatenated
    in RED, GREEN, BLUE, NIR, SWIR2 order."""
    if not profiles:
        raise ValueError(f"plot {plot_id} has no retained pixels to embed")
    stack = np.stack([p.bands for p in profiles])
    vec = stack.mean(axis=0).ravel()
    if not np.all(np.isfinite(vec)):
        raise ValueError(f"plot {plot_id}: non-finite embedding")
    return SpectralEmbedding(plot_id, vec)


def build_median_profiles(seeds: Sequence[tuple[SpectralEmbedding, str]],
                          min_seed_support: int = 5) -> dict[str, MedianProfile]:
    by_crop: dict[str, list[np.ndarray]] = {}
    for emb, crop in seeds:
        by_crop.setdefault(crop, []).append(emb.vector)
    out = {}
    for crop in sorted(by_crop):
        vecs = by_crop[crop]
        if len(vecs) < min_seed_support:
            raise ValueError(f"crop '{crop}' has {len(vecs)} seed plots, need {min_seed_support}")
        # np.median averages the two middle values for even counts
        out[crop] = MedianProfile(crop, np.median(np.stack(vecs), axis=0), len(vecs))
    return out


def cosine_sim(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise UndefinedScore("cosine similarity of a zero-norm vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def pearson_r(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    ca, cb = a - a.mean(), b - b.mean()
    if not np.any(ca) or not np.any(cb):
        raise UndefinedScore("Pearson correlation of a constant vector")
    return cosine_sim(ca, cb)


def manhattan(a, b) -> float:
    return float(np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)).sum())


def distance_scores(a, b) -> dict[str, float | None]:
    """All three scores; an undefined score is reported as None."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ValueError("vectors must be 1-D, equal length and at least 2 long")
    out: dict[str, float | None] = {"manhattan": manhattan(a, b)}
    for name, fn in (("cosine_sim", cosine_sim), ("pearson_r", pearson_r)):
        try:
            out[name] = fn(a, b)
        except UndefinedScore:
            out[name] = None
    return out


def _vote(scores: dict[str, float | None], higher_is_better: bool):
    valid = {c: s for c, s in scores.items() if s is not None}
    if not valid:
        return None
    ranked = sorted(valid.items(), key=lambda kv: kv[1], reverse=higher_is_better)
    if len(ranked) > 1 and abs(ranked[0][1] - ranked[1][1]) <= TIE_TOL:
        return None
    return ranked[0][0]


def verify_plot(embedding: SpectralEmbedding, medians: Mapping[str, MedianProfile], claimed: str,
                district: str = "") -> Verdict:
    """Nearest-median vote per metric; CONFIRMED needs two votes for ``claimed``.

    A metric abstains when undefined for the embedding or when its best two
    crops tie within 1e-12.
    """
    if len(medians) < 2:
        raise ValueError("verification needs median profiles for at least two crops")
    per_metric = {m: {} for m in METRICS}
    for crop, med in medians.items():
        s = distance_scores(embedding.vector, med.vector)
        per_metric["COSINE"][crop] = s["cosine_sim"]
        per_metric["PEARSON"][crop] = s["pearson_r"]
        per_metric["MANHATTAN"][crop] = s["manhattan"]
    votes = {
        "COSINE": _vote(per_metric["COSINE"], True),
        "PEARSON": _vote(per_metric["PEARSON"], True),
        "MANHATTAN": _vote(per_metric["MANHATTAN"], False),
    }
    agree = sum(v == claimed for v in votes.values())
    decision = Decision.CONFIRMED if agree >= 2 else Decision.FLAGGED
    return Verdict(embedding.plot_id, claimed, votes, decision, district)


def read_seed_file(path) -> list[tuple[str, str]]:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or not {"plot_id", "verified_crop"} <= set(reader.fieldnames):
            raise ValueError("seed file needs columns plot_id,verified_crop")
        return [(r["plot_id"], r["verified_crop"].strip()) for r in reader]


VERDICT_COLUMNS = ("plot_id", "claimed", "vote_cosine", "vote_pearson", "vote_manhattan", "decision")


def write_verdicts(path, verdicts: Sequence[Verdict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(VERDICT_COLUMNS + ("district",))
        for v in verdicts:
            w.writerow([v.plot_id, v.claimed, *(v.votes[m] or "ABSTAIN" for m in METRICS),
                        v.decision.value, v.district])
