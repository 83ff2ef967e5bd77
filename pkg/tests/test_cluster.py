"""Lloyd's k-means and the iterative small-cluster outlier remover."""

import numpy as np
import pytest

import gen
from trendscan.cluster import (KMeansParams, TooFewPointsError, iterative_kmeans,
                               kmeans)


def blobs(seed, centers, size=10, sigma=0.1):
    rng = np.random.default_rng(seed)
    centers = np.asarray(centers, dtype=float)
    return np.vstack([c + rng.normal(0, sigma, (size, len(c))) for c in centers])


class TestKMeans:
    def test_identical_points_single_cluster(self):
        x = np.tile([3.0, -1.0], (15, 1))
        out = kmeans(x, KMeansParams(k=1, seed=0))
        assert out.inertia == 0.0
        assert set(out.labels) == {0}

    def test_square_corners_exact_fit(self):
        x = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)
        out = kmeans(x, KMeansParams(k=4, seed=5))
        assert out.inertia == 0.0
        assert len(set(out.labels.tolist())) == 4

    def test_planted_blobs_recovered(self):
        for seed in range(25):
            x = blobs(seed, [[0, 0, 0], [10, 0, 0], [0, 10, 0]])
            out = kmeans(x, KMeansParams(k=3, seed=seed))
            partition = {frozenset(np.flatnonzero(out.labels == c).tolist())
                         for c in range(3)}
            assert partition == {frozenset(range(0, 10)),
                                 frozenset(range(10, 20)),
                                 frozenset(range(20, 30))}

    def test_too_few_points(self):
        with pytest.raises(TooFewPointsError, match="too-few-points"):
            kmeans(np.zeros((3, 2)), KMeansParams(k=4))

    def test_rejects_bad_matrices(self):
        with pytest.raises(ValueError):
            kmeans(np.zeros(5), KMeansParams(k=1))
        bad = np.zeros((5, 2))
        bad[1, 1] = np.nan
        with pytest.raises(ValueError):
            kmeans(bad, KMeansParams(k=2))

    def test_seed_determinism(self):
        x = blobs(3, [[0, 0], [5, 5]], size=40, sigma=1.0)
        a = kmeans(x, KMeansParams(k=4, seed=9))
        b = kmeans(x, KMeansParams(k=4, seed=9))
        assert np.array_equal(a.labels, b.labels)
        assert np.array_equal(a.centroids, b.centroids)
        assert a.inertia == b.inertia

    def test_inertia_non_increasing_and_consistent(self):
        for seed in range(50):
            rng = np.random.default_rng(seed)
            x = rng.normal(size=(rng.integers(10, 120), rng.integers(1, 6)))
            params = KMeansParams(k=int(rng.integers(1, 9)), seed=seed)
            if x.shape[0] < params.k:
                continue
            out = kmeans(x, params)
            for prev, cur in zip(out.inertia_trace, out.inertia_trace[1:]):
                assert cur <= prev * (1 + 1e-12)
            # inertia agrees with labels/centroids recomputed independently
            recomputed = sum(np.sum((x[i] - out.centroids[out.labels[i]]) ** 2)
                             for i in range(x.shape[0]))
            assert recomputed == pytest.approx(out.inertia, rel=1e-9, abs=1e-9)

    def test_nearest_centroid_by_brute_force(self):
        for seed in range(30):
            rng = np.random.default_rng(seed + 100)
            x = rng.normal(size=(60, 4))
            out = kmeans(x, KMeansParams(k=6, seed=seed))
            d = ((x[:, None, :] - out.centroids[None, :, :]) ** 2).sum(axis=2)
            best = d[np.arange(60), out.labels]
            assert np.all(best <= d.min(axis=1) * (1 + 1e-9) + 1e-12)


class TestIterativeKMeans:
    def test_planted_singletons_recovered(self):
        x, planted = gen.planted_blob_points(seed=0)
        out = iterative_kmeans(x, KMeansParams(k=4, small_cluster_max=2, seed=0))
        assert sorted(out.outlier_ids) == planted
        assert out.terminated_by == "no_small_clusters"
        assert out.iterations_run <= 3
        # oracle: planted points are the two farthest from every blob center
        centers = np.unique(x[:30], axis=0)
        far = np.min(((x[:, None, :] - centers[None]) ** 2).sum(2), axis=1)
        assert sorted(np.argsort(far)[-2:].tolist()) == planted

    def test_identical_points_terminate(self):
        x = np.tile([1.0, 2.0], (20, 1))
        out = iterative_kmeans(x, KMeansParams(k=4, small_cluster_max=2, seed=1))
        assert out.terminated_by in ("no_small_clusters", "max_iterations",
                                     "too_few_points")
        assert out.iterations_run <= 10
        assert len(out.outliers) + len(out.survivor_ids) == 20

    def test_partition_of_ids(self):
        x, _ = gen.planted_blob_points(seed=4)
        ids = [f"series-{i:02d}" for i in range(len(x))]
        out = iterative_kmeans(x, KMeansParams(k=4, small_cluster_max=2, seed=4),
                               ids=ids)
        assert set(out.outlier_ids) | set(out.survivor_ids) == set(ids)
        assert set(out.outlier_ids) & set(out.survivor_ids) == set()

    def test_order_invariance(self):
        x, _ = gen.planted_blob_points(seed=6)
        ids = [f"k{i:02d}" for i in range(len(x))]
        out1 = iterative_kmeans(x, KMeansParams(k=4, small_cluster_max=2, seed=6),
                                ids=ids)
        rng = np.random.default_rng(0)
        perm = rng.permutation(len(x))
        out2 = iterative_kmeans(x[perm],
                                KMeansParams(k=4, small_cluster_max=2, seed=6),
                                ids=[ids[i] for i in perm])
        assert out1.outliers == out2.outliers
        assert out1.survivor_ids == out2.survivor_ids

    def test_too_few_points_immediately(self):
        x = np.zeros((3, 2))
        out = iterative_kmeans(x, KMeansParams(k=8, seed=0))
        assert out.terminated_by == "too_few_points"
        assert out.final_assignment is None
        assert out.outliers == []
        assert out.iterations_run == 0

    def test_outlier_iteration_numbers(self):
        x, planted = gen.planted_blob_points(seed=2)
        out = iterative_kmeans(x, KMeansParams(k=4, small_cluster_max=2, seed=2))
        assert all(1 <= it <= out.iterations_run for _, it in out.outliers)
        assert all(len(out.label_history[i]) >= 1 for i in out.outlier_ids)

    def test_survivors_strictly_decrease(self):
        rng = np.random.default_rng(42)
        x = np.vstack([rng.normal(0, 0.05, (12, 3)),
                       rng.normal(8, 0.05, (12, 3)),
                       rng.normal(20, 0.2, (2, 3))])
        out = iterative_kmeans(x, KMeansParams(k=3, small_cluster_max=2, seed=7))
        removed_by_iter = {}
        for _, it in out.outliers:
            removed_by_iter[it] = removed_by_iter.get(it, 0) + 1
        assert all(v >= 1 for v in removed_by_iter.values())

    def test_empty_input_errors(self):
        with pytest.raises(ValueError):
            iterative_kmeans(np.zeros((0, 3)), KMeansParams(k=2))

    def test_everything_removed_in_one_sweep(self):
        # 8 far-apart duplicate pairs with k=8: every cluster is small,
        # one iteration strips the whole dataset
        rng = np.random.default_rng(0)
        centers = rng.normal(0, 1, (8, 3))
        centers = 50.0 * centers / np.linalg.norm(centers, axis=1, keepdims=True)
        x = np.repeat(centers, 2, axis=0)
        out = iterative_kmeans(x, KMeansParams(k=8, small_cluster_max=2, seed=0))
        assert out.terminated_by == "too_few_points"
        assert len(out.outlier_ids) == 16
        assert out.survivor_ids == []
        assert out.final_assignment is not None
        assert out.final_assignment.labels.size == 0
        assert out.final_assignment.inertia == 0.0

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValueError, match="unique"):
            iterative_kmeans(np.zeros((3, 2)), KMeansParams(k=2),
                             ids=["a", "a", "b"])
