import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gtclean.kmeans import kmeans


def brute_force_inertia(X: np.ndarray, k: int) -> float:
    """Minimum within-cluster sum of squares over every partition into k non-empty groups."""
    best = np.inf
    for labels in itertools.product(range(k), repeat=len(X)):
        if labels[0] != 0 or len(set(labels)) != k:  # fix the first label to skip relabellings
            continue
        lab = np.array(labels)
        total = sum(((X[lab == j] - X[lab == j].mean(axis=0)) ** 2).sum() for j in range(k))
        best = min(best, total)
    return best


def test_two_obvious_groups():
    m = kmeans([[0.0], [0.1], [10.0], [10.1]], 2, seed=0)
    groups = {tuple(np.flatnonzero(m.labels == j)) for j in range(2)}
    assert groups == {(0, 1), (2, 3)}
    assert sorted(m.centroids.ravel().tolist()) == pytest.approx([0.05, 10.05])
    assert m.inertia == pytest.approx(brute_force_inertia(np.array([[0.0], [0.1], [10.0], [10.1]]), 2))


def test_k_equals_n_gives_zero_inertia():
    X = np.array([[0.1, 0.2], [0.5, 0.1], [0.9, 0.9]])
    m = kmeans(X, 3, seed=4)
    assert sorted(m.labels.tolist()) == [0, 1, 2] and m.inertia == 0.0


def test_identical_profiles_single_cluster():
    m = kmeans(np.full((5, 3), 0.4), 1)
    np.testing.assert_array_equal(m.centroids[0], [0.4, 0.4, 0.4])
    assert m.inertia == 0.0


def test_k_above_distinct_count_is_an_error():
    with pytest.raises(ValueError, match="distinct"):
        kmeans(np.array([[0.1], [0.1], [0.2]]), 3)


def test_assignment_maps_ids():
    m = kmeans([[0.0], [1.0]], 2, ids=["a", "b"])
    assert set(m.assignment) == {"a", "b"} and m.assignment["a"] != m.assignment["b"]


@st.composite
def _instance(draw):
    n = draw(st.integers(2, 8))
    d = draw(st.integers(1, 3))
    X = draw(arrays(np.float64, (n, d), elements=st.floats(0, 1, allow_subnormal=False)))
    k = draw(st.integers(1, min(3, len(np.unique(X, axis=0)))))
    return X, k, draw(st.integers(0, 2**31))


@settings(max_examples=120, deadline=None)
@given(_instance())
def test_inertia_non_increasing_and_fixpoint(inst):
    X, k, seed = inst
    m = kmeans(X, k, seed=seed)
    h = np.array(m.history)
    assert np.all(np.diff(h) <= 1e-12 * max(1.0, h[0]))
    assert m.inertia == pytest.approx(((X - m.centroids[m.labels]) ** 2).sum(), abs=1e-12)
    # one more assign-then-update leaves the partition unchanged
    d = ((X[:, None, :] - m.centroids[None]) ** 2).sum(axis=2)
    assert np.all(d[np.arange(len(X)), m.labels] <= d.min(axis=1) + 1e-12)
    for j in range(k):
        assert np.any(m.labels == j)
        np.testing.assert_allclose(m.centroids[j], X[m.labels == j].mean(axis=0), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(_instance())
def test_deterministic_for_fixed_seed(inst):
    X, k, seed = inst
    a, b = kmeans(X, k, seed=seed), kmeans(X, k, seed=seed)
    assert a.labels.tolist() == b.labels.tolist() and a.inertia == b.inertia


@settings(max_examples=40, deadline=None)
@given(_instance())
def test_never_better_than_brute_force(inst):
    X, k, seed = inst
    assert kmeans(X, k, seed=seed).inertia >= brute_force_inertia(X, k) - 1e-9


def test_restarts_keep_best_run():
    rng = np.random.default_rng(0)
    X = rng.random((40, 2))
    assert kmeans(X, 5, seed=1, n_init=8).inertia <= kmeans(X, 5, seed=1, n_init=1).inertia + 1e-12
