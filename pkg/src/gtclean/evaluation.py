"""Plot-grouped train/test splitting and per-crop precision, recall, F1."""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Mapping, Sequence

import numpy as np

REPORT_COLUMNS = ("district", "crop", "year", "level", "precision", "tpr", "f1")


@dataclass(frozen=True, eq=False)
class FeatureRow:
    pixel_id: str
    plot_id: str
    features: np.ndarray
    label: str


def round_half_up(x: float) -> int:
    return int(Decimal(repr(float(x))).quantize(Decimal("1"), rounding=ROUND_HALF_UP))


def split_plots(plot_labels: Mapping[str, str], test_fraction: float, seed: int) -> tuple[set, set]:
    """Stratified plot split: per label, round(test_fraction * n) plots go to test."""
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must be in (0, 1)")
    by_label: dict[str, list[str]] = {}
    for pid, lab in plot_labels.items():
        by_label.setdefault(lab, []).append(pid)
    train, test = set(), set()
    rng = np.random.default_rng(seed)
    for lab in sorted(by_label):
        pids = sorted(by_label[lab])
        if len(pids) < 2:
            raise ValueError(f"crop '{lab}' has {len(pids)} plot(s); need at least 2 to stratify")
        n_test = min(max(round_half_up(test_fraction * len(pids)), 1), len(pids) - 1)
        order = rng.permutation(len(pids))
        chosen = {pids[i] for i in order[:n_test]}
        test |= chosen
        train |= set(pids) - chosen
    return train, test


def split_by_plot(rows: Sequence[FeatureRow], test_fraction: float, seed: int):
    labels: dict[str, str] = {}
    for r in rows:
        if labels.setdefault(r.plot_id, r.label) != r.label:
            raise ValueError(f"plot {r.plot_id} carries more than one label")
    train_plots, test_plots = split_plots(labels, test_fraction, seed)
    return [r for r in rows if r.plot_id in train_plots], [r for r in rows if r.plot_id in test_plots]


@dataclass
class EvalReport:
    crops: list[str]
    confusion: np.ndarray  # rows: true, cols: predicted
    level: str = ""

    @property
    def support(self) -> dict[str, int]:
        return {c: int(self.confusion[i].sum()) for i, c in enumerate(self.crops)}

    def _tp_fp_fn(self, i):
        tp = self.confusion[i, i]
        return tp, self.confusion[:, i].sum() - tp, self.confusion[i].sum() - tp

    def precision(self, crop: str) -> float:
        tp, fp, _ = self._tp_fp_fn(self.crops.index(crop))
        return float(tp / (tp + fp)) if tp + fp else 0.0

    def recall(self, crop: str) -> float:
        tp, _, fn = self._tp_fp_fn(self.crops.index(crop))
        return float(tp / (tp + fn)) if tp + fn else 0.0

    def f1(self, crop: str) -> float:
        p, r = self.precision(crop), self.recall(crop)
        return 2 * p * r / (p + r) if p + r else 0.0

    def macro_f1(self) -> float:
        return float(np.mean([self.f1(c) for c in self.crops]))

    def percent_row(self, crop: str) -> tuple[int, int, int]:
        """(precision, TPR, F1) as integer percentages, rounded half up."""
        return (round_half_up(100 * self.precision(crop)), round_half_up(100 * self.recall(crop)),
                round_half_up(100 * self.f1(crop)))


def evaluate(predicted: Sequence[str], truth: Sequence[str], crops: Sequence[str], level: str = "") -> EvalReport:
    if len(predicted) != len(truth):
        raise ValueError("predicted and true labels differ in length")
    crops = list(crops)
    index = {c: i for i, c in enumerate(crops)}
    cm = np.zeros((len(crops), len(crops)), dtype=np.int64)
    for p, t in zip(predicted, truth):
        cm[index[t], index[p]] += 1
    return EvalReport(crops, cm, level)
