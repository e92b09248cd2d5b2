import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairnorm.clustering import (
    ClusterModel,
    _repair_empty,
    assign,
    assign_many,
    fit_kmeans,
    inertia,
)
from fairnorm.errors import NumericError
from fairnorm.pairs import unit_rows
from helpers import make_dataset, random_unit_dataset


def two_blobs(rng, per_blob=50, dim=6, spread=0.02):
    """Well-separated spherical blobs; inter-center distance ~sqrt(2), spread 10x smaller."""
    centers = np.zeros((2, dim))
    centers[0, 0] = 1.0
    centers[1, 1] = 1.0
    vecs, labels = [], []
    for b in (0, 1):
        pts = centers[b] + spread * rng.normal(size=(per_blob, dim))
        vecs.extend(pts)
        labels.extend([b] * per_blob)
    return np.array(vecs), np.array(labels)


class TestFit:
    def test_k1_centroid_is_mean_of_normalized(self, rng):
        ds = random_unit_dataset(rng, n=15, n_subjects=5, dim=4)
        model = fit_kmeans(ds, 1, seed=3)
        unit = unit_rows(ds.matrix)
        np.testing.assert_array_equal(model.centroids[0], unit.mean(axis=0))

    def test_two_blob_recovery(self, rng):
        vecs, blob = two_blobs(rng)
        ds = make_dataset(vecs, [f"u{i}" for i in range(len(vecs))])
        model = fit_kmeans(ds, 2, seed=0)
        got = assign_many(model, ds.matrix)
        # cluster ids may be permuted relative to blob labels
        direct = np.array_equal(got, blob)
        flipped = np.array_equal(got, 1 - blob)
        assert direct or flipped

    def test_inertia_beats_random_restarts(self, rng):
        # fitted k=3 inertia no worse than 1000 random centroid triples
        ds = random_unit_dataset(rng, n=20, n_subjects=5, dim=4)
        model = fit_kmeans(ds, 3, seed=11)
        fitted = inertia(model, ds)
        unit = unit_rows(ds.matrix)
        for _ in range(1000):
            triple = unit[rng.choice(20, size=3, replace=False)]
            random_model = ClusterModel(
                k=3, centroids=triple, seed=0, iterations_run=0, converged=True
            )
            assert fitted <= inertia(random_model, ds) + 1e-12

    def test_determinism_bit_identical(self, rng):
        ds = random_unit_dataset(rng, n=40, n_subjects=10, dim=5)
        a = fit_kmeans(ds, 4, seed=9, max_iters=50, tol=1e-6)
        b = fit_kmeans(ds, 4, seed=9, max_iters=50, tol=1e-6)
        assert np.array_equal(a.centroids, b.centroids)
        assert a.inertia_history == b.inertia_history
        assert a.iterations_run == b.iterations_run

    def test_inertia_monotone_non_increasing(self, rng):
        for trial in range(30):
            n = int(rng.integers(8, 40))
            k = int(rng.integers(1, min(6, n)))
            ds = random_unit_dataset(rng, n=n, n_subjects=max(2, n // 3), dim=4)
            model = fit_kmeans(ds, k, seed=trial)
            hist = model.inertia_history
            assert all(b <= a for a, b in zip(hist, hist[1:])), hist

    def test_k_bounds(self, rng):
        ds = random_unit_dataset(rng, n=5, n_subjects=5)
        with pytest.raises(NumericError, match="exceeds"):
            fit_kmeans(ds, 6, seed=0)
        with pytest.raises(NumericError):
            fit_kmeans(ds, 0, seed=0)

    def test_every_cluster_used_on_generic_data(self, rng):
        ds = random_unit_dataset(rng, n=30, n_subjects=10, dim=3)
        model = fit_kmeans(ds, 6, seed=2)
        got = assign_many(model, ds.matrix)
        assert set(got.tolist()) == set(range(6))

    def test_duplicate_heavy_data_completes(self, rng):
        # more clusters than distinct points still terminates with finite centroids
        base = rng.normal(size=(2, 3))
        vecs = np.repeat(base, 5, axis=0)
        ds = make_dataset(vecs, [f"u{i}" for i in range(10)])
        model = fit_kmeans(ds, 3, seed=1)
        assert np.all(np.isfinite(model.centroids))


class TestRepairEmpty:
    def test_farthest_eligible_sample_donated(self):
        labels = np.array([0, 0, 0, 1])
        dist = np.array([0.1, 0.9, 0.2, 0.5])
        repaired = _repair_empty(labels, dist, k=3)
        assert repaired.tolist() == [0, 2, 0, 1]  # sample 1 is farthest

    def test_singleton_clusters_not_emptied(self):
        labels = np.array([0, 1])
        dist = np.array([0.9, 0.1])
        repaired = _repair_empty(labels, dist, k=3)
        # both source clusters are singletons; the donor still must come from somewhere
        assert sorted(np.bincount(repaired, minlength=3).tolist()).count(0) <= 1

    def test_no_op_when_all_occupied(self):
        labels = np.array([0, 1, 0])
        out = _repair_empty(labels, np.array([0.5, 0.5, 0.5]), k=2)
        assert out is labels


class TestAssign:
    def _model(self, centroids):
        return ClusterModel(
            k=len(centroids),
            centroids=np.asarray(centroids, dtype=np.float64),
            seed=0,
            iterations_run=1,
            converged=True,
        )

    def test_exact_centroid_match(self, rng):
        ds = random_unit_dataset(rng, n=12, n_subjects=4, dim=3)
        model = fit_kmeans(ds, 3, seed=5)
        assert assign(model, model.centroids[2]) == 2

    def test_tie_breaks_to_lowest_id(self):
        model = self._model([[1.0, 0.0], [0.0, 1.0]])
        v = np.array([1.0, 1.0])  # equidistant after normalization
        assert assign(model, v) == 0

    def test_scale_invariance(self):
        model = self._model([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
        v = np.array([-0.3, 0.1])
        assert assign(model, 5.0 * v) == assign(model, v)

    def test_scaled_centroid(self, rng):
        ds = random_unit_dataset(rng, n=12, n_subjects=4, dim=3)
        model = fit_kmeans(ds, 3, seed=5)
        assert assign(model, 5.0 * model.centroids[2]) == 2

    def test_zero_norm_rejected(self):
        model = self._model([[1.0, 0.0]])
        with pytest.raises(NumericError, match="zero-norm"):
            assign(model, np.zeros(2))

    def test_dimension_checked(self):
        model = self._model([[1.0, 0.0]])
        with pytest.raises(NumericError, match="dimension"):
            assign(model, np.ones(3))

    @given(st.integers(0, 10_000), st.floats(min_value=1e-6, max_value=1e6))
    @settings(max_examples=200)
    def test_scale_invariance_property(self, seed, lam):
        rng = np.random.default_rng(seed)
        centroids = unit_rows(rng.normal(size=(4, 3)))
        model = self._model(centroids)
        v = rng.normal(size=3)
        if np.linalg.norm(v) == 0.0:
            return
        assert assign(model, v) == assign(model, lam * v)

    def test_assigned_centroid_is_nearest(self, rng):
        ds = random_unit_dataset(rng, n=50, n_subjects=10, dim=4)
        model = fit_kmeans(ds, 5, seed=8)
        unit = unit_rows(ds.matrix)
        labels = assign_many(model, ds.matrix)
        d2 = ((unit[:, None, :] - model.centroids[None]) ** 2).sum(axis=2)
        own = d2[np.arange(len(unit)), labels]
        assert np.all(own[:, None] <= d2 + 1e-15)
