"""Lloyd's k-means with seeded k-means++ initialisation."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

import numba
import numpy as np


class ClusterFlag(str, Enum):
    OK = "OK"
    FLAT = "FLAT"
    NOISY = "NOISY"


@dataclass(frozen=True, eq=False)
class ClusterModel:
    k: int
    centroids: np.ndarray
    labels: np.ndarray
    inertia: float
    ids: tuple = ()
    flags: dict = field(default_factory=dict)
    history: tuple = ()
    n_iter: int = 0

    @property
    def assignment(self) -> dict:
        return dict(zip(self.ids, self.labels.tolist()))

    def with_flags(self, flags: dict) -> "ClusterModel":
        return replace(self, flags=dict(flags))


@numba.njit(cache=True)
def _assign(X, C):
    """Nearest centre per row (first on ties) and the squared distance to it."""
    n, d = X.shape
    labels = np.empty(n, np.int64)
    for i in range(n):
        best = np.inf
        bj = 0
        for j in range(C.shape[0]):
            s = 0.0
            for t in range(d):
                diff = X[i, t] - C[j, t]
                s += diff * diff
            if s < best:
                best = s
                bj = j
        labels[i] = bj
    return labels


@numba.njit(cache=True)
def _inertia(X, C, labels):
    total = 0.0
    for i in range(X.shape[0]):
        for t in range(X.shape[1]):
            diff = X[i, t] - C[labels[i], t]
            total += diff * diff
    return total


def inertia_of(X: np.ndarray, C: np.ndarray, labels: np.ndarray) -> float:
    return float(_inertia(X, C, labels))


def kmeans_plusplus(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """D^2-weighted seeding: each new centre is drawn with probability
    proportional to its squared distance from the nearest chosen centre."""
    n = X.shape[0]
    centers = [int(rng.integers(n))]
    d2 = ((X - X[centers[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            i = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            i = min(i, n - 1)
            while d2[i] == 0:  # float edge case at the cumsum boundary
                i -= 1
        else:
            # distinct rows whose squared distances underflow to zero
            taken = np.all(X[:, None, :] == X[centers][None], axis=2).any(axis=1)
            i = int(np.flatnonzero(~taken)[0])
        centers.append(i)
        d2 = np.minimum(d2, ((X - X[i]) ** 2).sum(axis=1))
    return X[centers].copy()


def _repair_empty(X, C, labels, k):
    """Give every empty cluster the point farthest from its own centroid."""
    counts = np.bincount(labels, minlength=k)
    for j in np.flatnonzero(counts == 0):
        d = ((X - C[labels]) ** 2).sum(axis=1)
        d[counts[labels] < 2] = -1.0  # never empty another cluster
        far = int(np.argmax(d))
        counts[labels[far]] -= 1
        labels[far] = j
        counts[j] = 1
        C[j] = X[far]
    return labels


def _update(X, labels, k):
    sums = np.column_stack([np.bincount(labels, weights=X[:, j], minlength=k) for j in range(X.shape[1])])
    return sums / np.bincount(labels, minlength=k)[:, None]


def _lloyd(X, k, rng, max_iter):
    C = kmeans_plusplus(X, k, rng)
    labels = _assign(X, C)
    labels = _repair_empty(X, C, labels, k)
    history = [inertia_of(X, C, labels)]
    it = 0
    for it in range(1, max_iter + 1):
        C = _update(X, labels, k)
        history.append(inertia_of(X, C, labels))
        new = _assign(X, C)
        new = _repair_empty(X, C, new, k)
        history.append(inertia_of(X, C, new))
        if np.array_equal(new, labels):
            break
        labels = new
    return C, labels, history, it


def kmeans(profiles, k: int, seed: int = 0, max_iter: int = 300, n_init: int = 10,
           ids: Sequence | None = None) -> ClusterModel:
    """Cluster row vectors with Lloyd's algorithm.

    ``n_init`` independent seeded restarts are run and the lowest-inertia
    result kept. ``history`` records the inertia after every assignment and
    update step of the kept run and is non-increasing.
    """
    X = np.ascontiguousarray(profiles, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("profiles must be a 2-D array (n_profiles, n_steps)")
    if k < 1 or n_init < 1:
        raise ValueError("k and n_init must be positive")
    n_distinct = np.unique(X, axis=0).shape[0] if X.size else 0
    if k > n_distinct:
        raise ValueError(f"k={k} exceeds the number of distinct profiles ({n_distinct})")
    ss = np.random.SeedSequence(seed)
    best = None
    for child in ss.spawn(n_init):
        C, labels, history, it = _lloyd(X, k, np.random.default_rng(child), max_iter)
        inertia = history[-1]
        if best is None or inertia < best[3] - 1e-12:
            best = (C, labels, history, inertia, it)
    C, labels, history, inertia, it = best
    ids = tuple(ids) if ids is not None else tuple(range(X.shape[0]))
    return ClusterModel(
        k=k, centroids=C, labels=labels, inertia=inertia, ids=ids,
        flags={j: ClusterFlag.OK for j in range(k)}, history=tuple(history), n_iter=it,
    )
