"""Seeded k-means and the small-cluster-peeling outlier remover.

kmeans() is Lloyd's algorithm from k-means++ initialization, driven by an
explicit PCG64 generator so runs are reproducible across platforms.
iterative_kmeans() repeatedly clusters, peels every cluster of size at
most small_cluster_max off as outliers, and re-clusters until no small
cluster remains, the iteration budget runs out, or too few points are
left to cluster.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from trendscan import kernels


class TooFewPointsError(ValueError):
    pass


@dataclass(frozen=True)
class KMeansParams:
    k: int = 8
    small_cluster_max: int = 2
    max_outer_iterations: int = 10
    lloyd_max_iterations: int = 300
    convergence_tol: float = 1e-6  # relative inertia change
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.small_cluster_max < 1:
            raise ValueError("small_cluster_max must be >= 1")
        if self.max_outer_iterations < 1 or self.lloyd_max_iterations < 1:
            raise ValueError("iteration limits must be >= 1")

    def with_seed(self, seed: int) -> "KMeansParams":
        return KMeansParams(k=self.k, small_cluster_max=self.small_cluster_max,
                            max_outer_iterations=self.max_outer_iterations,
                            lloyd_max_iterations=self.lloyd_max_iterations,
                            convergence_tol=self.convergence_tol, seed=seed)


@dataclass
class ClusterAssignment:
    labels: np.ndarray          # (n,) int64, nearest centroid (ties to lowest index)
    centroids: np.ndarray       # (k, d)
    inertia: float              # sum of squared distances to assigned centroid
    inertia_trace: list[float] = field(default_factory=list)
    n_iter: int = 0

    def cluster_sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.centroids.shape[0])


@dataclass
class IterativeKMeansResult:
    outliers: list[tuple[object, int]]            # (point id, removed-at-iteration)
    final_assignment: ClusterAssignment | None    # over survivors; None if uncomputable
    survivor_ids: list
    iterations_run: int
    terminated_by: str  # no_small_clusters | max_iterations | too_few_points
    label_history: dict = field(default_factory=dict)  # id -> labels per iteration

    @property
    def outlier_ids(self) -> list:
        return [oid for oid, _ in self.outliers]


def _validate_matrix(x: np.ndarray) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-D point matrix, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise ValueError("point matrix contains non-finite components")
    return x


def _kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding; duplicate points carry zero selection weight.

    If the remaining squared-distance mass is exactly zero (all residual
    points duplicate a chosen centroid), remaining seeds fall back to the
    lowest unchosen point index, deterministically.
    """
    n = x.shape[0]
    centroids = np.empty((k, x.shape[1]))
    chosen: set[int] = set()
    first = int(rng.integers(n))
    centroids[0] = x[first]
    chosen.add(first)
    d2 = kernels.pairwise_sqdist(x, centroids[0:1])[:, 0]
    for c in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            idx = min(i for i in range(n) if i not in chosen)
        else:
            r = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(d2), r, side="right"))
            idx = min(idx, n - 1)
        centroids[c] = x[idx]
        chosen.add(idx)
        d2 = np.minimum(d2, kernels.pairwise_sqdist(x, centroids[c:c + 1])[:, 0])
    return centroids


def kmeans(vectors: np.ndarray, params: KMeansParams) -> ClusterAssignment:
    """Lloyd's k-means from a seeded k-means++ start.

    Deterministic for a fixed seed. Stops when the relative inertia change
    drops below convergence_tol or after lloyd_max_iterations. Empty
    clusters are reseeded at the point farthest from its assigned
    centroid. Raises TooFewPointsError when n < k.
    """
    x = _validate_matrix(vectors)
    n, k = x.shape[0], params.k
    if n < k:
        raise TooFewPointsError(f"too-few-points: n={n} < k={k}")
    rng = np.random.Generator(np.random.PCG64(params.seed))
    centroids = _kmeans_pp_init(x, k, rng)
    trace: list[float] = []
    prev = None
    labels = mind = None
    for it in range(params.lloyd_max_iterations):
        labels, mind = kernels.assign(x, centroids)
        empties = np.flatnonzero(np.bincount(labels, minlength=k) == 0)
        if empties.size:
            # reseed each empty at the current farthest point, then reassign
            for c in empties:
                far = int(np.argmax(mind))
                centroids[c] = x[far]
                mind[far] = 0.0
            labels, mind = kernels.assign(x, centroids)
        inertia = float(np.sum(mind))
        # Lloyd guarantee; headroom only for accumulated rounding
        assert prev is None or inertia <= prev * (1 + 1e-9) + 1e-9, \
            f"inertia rose {prev} -> {inertia}"
        trace.append(inertia)
        converged = prev is not None and abs(prev - inertia) <= params.convergence_tol * prev
        if converged or it == params.lloyd_max_iterations - 1:
            break
        prev = inertia
        sums, counts = kernels.accumulate(x, labels, k)
        nonzero = counts > 0
        centroids[nonzero] = sums[nonzero] / counts[nonzero, None]
    return ClusterAssignment(labels=labels, centroids=centroids,
                             inertia=trace[-1], inertia_trace=trace,
                             n_iter=len(trace))


def _small_clusters(sizes: np.ndarray, small_max: int) -> list[int]:
    # empty clusters have nothing to remove and are not outlier clusters
    return [c for c in range(len(sizes)) if 1 <= sizes[c] <= small_max]


def _assignment_over(x: np.ndarray, template: ClusterAssignment) -> ClusterAssignment:
    """Re-derive labels/inertia for a subset of points, centroids fixed."""
    labels, mind = kernels.assign(x, np.ascontiguousarray(template.centroids))
    return ClusterAssignment(labels=labels, centroids=template.centroids,
                             inertia=float(np.sum(mind)) if x.shape[0] else 0.0,
                             inertia_trace=list(template.inertia_trace),
                             n_iter=template.n_iter)


def iterative_kmeans(vectors: np.ndarray, params: KMeansParams,
                     ids: list | None = None) -> IterativeKMeansResult:
    """Peel small clusters off as outliers until the clustering is stable.

    Points are sorted by id before seeding, so the outlier set does not
    depend on input order. Each outer iteration clusters the survivors
    with a derived seed (seed + iteration index), removes every cluster of
    size <= small_cluster_max, and stops when none exist, the iteration
    budget is exhausted, or fewer than k survivors remain. There is no cap
    on how many outliers a single iteration may remove.
    """
    x = _validate_matrix(vectors)
    n = x.shape[0]
    if n == 0:
        raise ValueError("no points to cluster")
    if ids is None:
        ids = list(range(n))
    if len(ids) != n:
        raise ValueError("ids must match the number of points")
    if len(set(ids)) != n:
        raise ValueError("ids must be unique")
    order = sorted(range(n), key=lambda i: ids[i])
    x = x[order]
    ids = [ids[i] for i in order]

    outliers: list[tuple[object, int]] = []
    history: dict = {pid: [] for pid in ids}
    last: ClusterAssignment | None = None
    iterations = 0
    while True:
        if len(ids) < params.k:
            terminated = "too_few_points"
            final = _assignment_over(x, last) if last is not None else None
            break
        iterations += 1
        assignment = kmeans(x, params.with_seed(params.seed + iterations - 1))
        last = assignment
        for pid, label in zip(ids, assignment.labels):
            history[pid].append(int(label))
        small = _small_clusters(assignment.cluster_sizes(), params.small_cluster_max)
        if not small:
            terminated = "no_small_clusters"
            final = assignment
            break
        removed = np.isin(assignment.labels, small)
        outliers.extend((pid, iterations)
                        for pid, gone in zip(ids, removed) if gone)
        keep = ~removed
        x = x[keep]
        ids = [pid for pid, keeping in zip(ids, keep) if keeping]
        if iterations == params.max_outer_iterations:
            terminated = "max_iterations"
            final = _assignment_over(x, last)
            break
    return IterativeKMeansResult(outliers=outliers, final_assignment=final,
                                 survivor_ids=list(ids),
                                 iterations_run=iterations,
                                 terminated_by=terminated,
                                 label_history=history)
