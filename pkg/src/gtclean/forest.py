"""CART trees and a bagged random forest, Gini splits, fully specified ties.

Split candidates are midpoints between consecutive distinct sorted values.
Among equally good splits the lowest feature index wins, then the lowest
threshold. Per-tree randomness comes from ``default_rng([seed, tree_index])``
so trees can be built in any order with identical results.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numba
import numpy as np

FORMAT = "gtclean-forest"
VERSION = 1


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int | None = None
    min_samples_leaf: int = 1
    max_features: int | None = None  # None -> floor(sqrt(d))
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")

    def features_per_split(self, d: int) -> int:
        m = self.max_features if self.max_features is not None else int(math.isqrt(d))
        if not 1 <= m <= d:
            raise ValueError(f"features_per_split must be in [1, {d}], got {m}")
        return m


@numba.njit(cache=True)
def _best_split(X, y, idx, features, n_classes, min_leaf):
    """Return (feature, threshold, n * weighted child Gini); feature -1 if none."""
    n = idx.shape[0]
    total = np.zeros(n_classes, np.int64)
    for j in range(n):
        total[y[idx[j]]] += 1
    tot_sq = 0
    for c in range(n_classes):
        tot_sq += total[c] * total[c]
    tol = 1e-12 * n
    best_score = np.inf
    best_f = -1
    best_thr = 0.0
    vals = np.empty(n)
    left = np.zeros(n_classes, np.int64)
    right = np.zeros(n_classes, np.int64)
    for f in features:
        for j in range(n):
            vals[j] = X[idx[j], f]
        order = np.argsort(vals, kind="mergesort")
        if vals[order[0]] == vals[order[n - 1]]:
            continue
        for c in range(n_classes):
            left[c] = 0
            right[c] = total[c]
        sl = 0
        sr = tot_sq
        for j in range(n - 1):
            c = y[idx[order[j]]]
            sl += 2 * left[c] + 1
            left[c] += 1
            sr -= 2 * right[c] - 1
            right[c] -= 1
            a = vals[order[j]]
            b = vals[order[j + 1]]
            if a == b:
                continue
            nl = j + 1
            nr = n - nl
            if nl < min_leaf or nr < min_leaf:
                continue
            score = (nl - sl / nl) + (nr - sr / nr)
            if score < best_score - tol:
                best_score = score
                best_f = f
                thr = 0.5 * (a + b)
                if thr >= b:  # adjacent floats
                    thr = a
                best_thr = thr
    return best_f, best_thr, best_score


def gini(counts) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    n = counts.sum()
    return 0.0 if n == 0 else float(1.0 - ((counts / n) ** 2).sum())


class Tree:
    """Array-backed binary tree. ``feature[i] == -1`` marks a leaf."""

    def __init__(self, feature, threshold, left, right, counts):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.counts = np.asarray(counts, dtype=np.int64).reshape(len(self.feature), -1)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            f = self.feature[node[active]]
            go_left = X[active, f] <= self.threshold[node[active]]
            node[active] = np.where(go_left, self.left[node[active]], self.right[node[active]])
            active = active[self.feature[node[active]] >= 0]
        return node

    def predict_index(self, X: np.ndarray) -> np.ndarray:
        # argmax returns the first maximum, i.e. the lowest class index on ties
        return self.counts[self.apply(X)].argmax(axis=1)

    def to_dict(self) -> dict:
        nodes = []
        for i in range(self.n_nodes):
            node = {"id": i, "counts": self.counts[i].tolist()}
            if self.feature[i] >= 0:
                node.update(feature=int(self.feature[i]), threshold=float(self.threshold[i]),
                            left=int(self.left[i]), right=int(self.right[i]))
            nodes.append(node)
        return {"nodes": nodes}

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        nodes = sorted(d["nodes"], key=lambda n: n["id"])
        return cls(
            [n.get("feature", -1) for n in nodes],
            [n.get("threshold", 0.0) for n in nodes],
            [n.get("left", -1) for n in nodes],
            [n.get("right", -1) for n in nodes],
            [n["counts"] for n in nodes],
        )


def build_tree(X: np.ndarray, y: np.ndarray, sample: np.ndarray, n_classes: int,
               cfg: ForestConfig, rng: np.random.Generator) -> Tree:
    d = X.shape[1]
    m = cfg.features_per_split(d)
    max_depth = cfg.max_depth if cfg.max_depth is not None else np.iinfo(np.int64).max
    feature, threshold, left, right, counts = [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(np.bincount(y[idx], minlength=n_classes))
        return len(feature) - 1

    root = new_node(sample)
    stack = [(root, sample, 0)]
    while stack:
        node, idx, depth = stack.pop()
        c = counts[node]
        if depth >= max_depth or (c > 0).sum() <= 1 or idx.size < 2 * cfg.min_samples_leaf:
            continue
        feats = np.sort(rng.choice(d, size=m, replace=False)) if m < d else np.arange(d)
        f, thr, _ = _best_split(X, y, idx, feats, n_classes, cfg.min_samples_leaf)
        if f < 0 and m < d:
            rest = np.setdiff1d(np.arange(d), feats)
            f, thr, _ = _best_split(X, y, idx, rest, n_classes, cfg.min_samples_leaf)
        if f < 0:
            continue
        go_left = X[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        feature[node], threshold[node] = int(f), float(thr)
        left[node] = new_node(li)
        right[node] = new_node(ri)
        # right pushed first so the left subtree is numbered first
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))
    return Tree(feature, threshold, left, right, counts)


class RandomForest:
    def __init__(self, trees: Sequence[Tree], classes: Sequence[str], n_features: int,
                 config: ForestConfig | None = None):
        self.trees = list(trees)
        self.classes = list(classes)
        self.n_features = n_features
        self.config = config or ForestConfig()
        self.oob_accuracy: float | None = None

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got shape {X.shape}")
        return X

    def votes(self, X) -> np.ndarray:
        X = self._check(X)
        out = np.zeros((X.shape[0], len(self.classes)), dtype=np.int64)
        rows = np.arange(X.shape[0])
        for t in self.trees:
            out[rows, t.predict_index(X)] += 1
        return out

    def predict(self, X) -> list[str]:
        """Majority vote; ties resolve to the lexicographically smallest class
        (classes are kept sorted, so the first maximum)."""
        return [self.classes[i] for i in self.votes(X).argmax(axis=1)]

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": VERSION,
            "classes": self.classes,
            "n_features": self.n_features,
            "config": asdict(self.config),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RandomForest":
        if d.get("format") != FORMAT or "version" not in d:
            raise ValueError("not a gtclean forest document")
        if d["version"] != VERSION:
            raise ValueError(f"unsupported forest version {d['version']}")
        return cls([Tree.from_dict(t) for t in d["trees"]], d["classes"], d["n_features"],
                   ForestConfig(**d["config"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "RandomForest":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def train_forest(X, labels: Sequence[str], cfg: ForestConfig = ForestConfig()) -> RandomForest:
    """Fit ``cfg.n_trees`` trees on seeded bootstrap samples.

    Out-of-bag accuracy (when bootstrapping) is stored on ``oob_accuracy``.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != len(labels):
        raise ValueError("X must be (n_rows, n_features) with one label per row")
    if not np.all(np.isfinite(X)):
        raise ValueError("features must be finite")
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise ValueError("training data needs at least two classes")
    lookup = {c: i for i, c in enumerate(classes)}
    y = np.array([lookup[c] for c in labels], dtype=np.int64)
    n = X.shape[0]
    trees = []
    oob_votes = np.zeros((n, len(classes)), dtype=np.int64)
    for t in range(cfg.n_trees):
        rng = np.random.default_rng([cfg.seed, t])
        sample = rng.integers(0, n, size=n) if cfg.bootstrap else np.arange(n)
        tree = build_tree(X, y, sample, len(classes), cfg, rng)
        trees.append(tree)
        if cfg.bootstrap:
            oob = np.ones(n, dtype=bool)
            oob[sample] = False
            rows = np.flatnonzero(oob)
            oob_votes[rows, tree.predict_index(X[rows])] += 1
    model = RandomForest(trees, classes, X.shape[1], cfg)
    if cfg.bootstrap:
        seen = oob_votes.sum(axis=1) > 0
        if seen.any():
            model.oob_accuracy = float((oob_votes[seen].argmax(axis=1) == y[seen]).mean())
    return model
