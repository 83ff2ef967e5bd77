"""Independent outlier detectors used to cross-check the lattice scan.

Isolation forest: random axis-aligned partition trees over subsamples;
anomalies isolate in few splits, so short expected path lengths score
near 1. Local outlier factor: ratio of neighbor density to own density;
inliers sit near 1. Feature bagging: LOF summed over random feature
subsets. All three are deterministic for a fixed seed, with per-tree and
per-round seeds derived as seed + index so parallel and serial runs agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from trendscan import kernels

EULER_GAMMA = 0.5772156649
REACH_FLOOR = 1e-12  # keeps duplicate points (zero distances) finite


@dataclass(frozen=True)
class IsolationForestParams:
    n_trees: int = 100
    subsample: int = 256  # capped at n
    max_depth: int | None = None  # default ceil(log2(subsample))
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.subsample < 2:
            raise ValueError("subsample must be >= 2")


@dataclass(frozen=True)
class LofParams:
    k_neighbors: int = 10

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")


@dataclass(frozen=True)
class FeatureBaggingParams:
    rounds: int = 10
    lof: LofParams = LofParams()
    seed: int = 0

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")


def expected_path_length(m: int) -> float:
    """Average unsuccessful-search depth in a binary search tree of m points."""
    if m <= 1:
        return 0.0
    if m == 2:
        return 1.0
    harmonic = math.log(m - 1) + EULER_GAMMA
    return 2.0 * harmonic - 2.0 * (m - 1) / m


def anomaly_score(avg_path: float, psi: int) -> float:
    """Isolation score 2^(-E[h]/c(psi)); 0.5 when E[h] equals c(psi)."""
    return 2.0 ** (-avg_path / expected_path_length(psi))


class _TreeNode:
    __slots__ = ("feature", "split", "left", "right", "size")

    def __init__(self, size: int, feature: int = -1, split: float = 0.0,
                 left=None, right=None):
        self.size = size
        self.feature = feature
        self.split = split
        self.left = left
        self.right = right


def _grow_tree(x: np.ndarray, depth: int, max_depth: int,
               rng: np.random.Generator) -> _TreeNode:
    n = x.shape[0]
    if n <= 1 or depth >= max_depth:
        return _TreeNode(size=n)
    lo = x.min(axis=0)
    hi = x.max(axis=0)
    varying = np.flatnonzero(hi > lo)
    if varying.size == 0:  # all points identical
        return _TreeNode(size=n)
    feature = int(varying[rng.integers(varying.size)])
    split = float(rng.uniform(lo[feature], hi[feature]))
    mask = x[:, feature] < split
    return _TreeNode(size=n, feature=feature, split=split,
                     left=_grow_tree(x[mask], depth + 1, max_depth, rng),
                     right=_grow_tree(x[~mask], depth + 1, max_depth, rng))


def _path_lengths(tree: _TreeNode, x: np.ndarray) -> np.ndarray:
    """Vectorized routing of all points through one tree."""
    out = np.zeros(x.shape[0])
    stack = [(tree, np.arange(x.shape[0]), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if node.feature < 0:
            out[idx] = depth + expected_path_length(node.size)
            continue
        mask = x[idx, node.feature] < node.split
        stack.append((node.left, idx[mask], depth + 1))
        stack.append((node.right, idx[~mask], depth + 1))
    return out


def isolation_forest_scores(vectors: np.ndarray,
                            params: IsolationForestParams) -> np.ndarray:
    """Per-point anomaly scores in (0, 1); higher is more anomalous."""
    x = np.ascontiguousarray(vectors, dtype=np.float64)
    n = x.shape[0]
    if n < 2:
        raise ValueError("isolation forest needs at least 2 points")
    psi = min(params.subsample, n)
    max_depth = params.max_depth
    if max_depth is None:
        max_depth = math.ceil(math.log2(psi))
    paths = np.zeros(n)
    for t in range(params.n_trees):
        rng = np.random.Generator(np.random.PCG64(params.seed + t))
        sample = rng.choice(n, size=psi, replace=False)
        tree = _grow_tree(x[sample], 0, max_depth, rng)
        paths += _path_lengths(tree, x)
    avg = paths / params.n_trees
    return np.array([anomaly_score(h, psi) for h in avg])


def _neighborhoods(x: np.ndarray, k: int, block: int = 512):
    """k-distance and neighbor sets (everything within the k-distance).

    Follows the density-based definition: the neighborhood holds every
    other point at distance <= the k-th nearest distance, so ties can push
    it past k members.
    """
    n = x.shape[0]
    kdist = np.empty(n)
    neighbors: list[np.ndarray] = [None] * n
    ndists: list[np.ndarray] = [None] * n
    for start in range(0, n, block):
        stop = min(start + block, n)
        d2 = kernels.pairwise_sqdist(x[start:stop], x)
        d = np.sqrt(np.maximum(d2, 0.0))
        d[np.arange(stop - start), np.arange(start, stop)] = np.inf  # not own neighbor
        kd_block = np.partition(d, k - 1, axis=1)[:, k - 1]
        kdist[start:stop] = kd_block
        for i in range(start, stop):
            row = d[i - start]
            mask = row <= kd_block[i - start]
            neighbors[i] = np.flatnonzero(mask)
            ndists[i] = row[mask]
    return kdist, neighbors, ndists


def lof_scores(vectors: np.ndarray, params: LofParams) -> np.ndarray:
    """Local outlier factor per point; ~1 for inliers, >> 1 for outliers."""
    x = np.ascontiguousarray(vectors, dtype=np.float64)
    n = x.shape[0]
    if n <= params.k_neighbors:
        raise ValueError(f"LOF needs n > k_neighbors ({n} <= {params.k_neighbors})")
    kdist, neighbors, ndists = _neighborhoods(x, params.k_neighbors)
    lrd = np.empty(n)
    for i in range(n):
        # each reachability distance is floored so duplicates stay finite
        reach = np.maximum(np.maximum(kdist[neighbors[i]], ndists[i]), REACH_FLOOR)
        lrd[i] = 1.0 / reach.mean()
    scores = np.empty(n)
    for i in range(n):
        scores[i] = (lrd[neighbors[i]] / lrd[i]).mean()
    return scores


def bagging_round_subsets(params: FeatureBaggingParams, d: int) -> list[np.ndarray]:
    """The feature subset each round projects onto (deterministic per seed).

    Subset sizes are uniform in [ceil(d/2), d-1]; members are sampled
    without replacement with the round's derived seed.
    """
    if d < 2:
        raise ValueError("feature bagging needs at least 2 dimensions")
    subsets = []
    for r in range(params.rounds):
        rng = np.random.Generator(np.random.PCG64(params.seed + r))
        size = int(rng.integers(math.ceil(d / 2), d))
        subsets.append(np.sort(rng.choice(d, size=size, replace=False)))
    return subsets


def feature_bagging_scores(vectors: np.ndarray,
                           params: FeatureBaggingParams) -> np.ndarray:
    """Cumulative-sum combination of LOF scores over random feature subsets."""
    x = np.ascontiguousarray(vectors, dtype=np.float64)
    total = np.zeros(x.shape[0])
    for subset in bagging_round_subsets(params, x.shape[1]):
        total += lof_scores(x[:, subset], params.lof)
    return total


@dataclass
class ComparisonRow:
    key: tuple
    index: int
    iforest_score: float
    iforest_rank: int
    bagging_score: float
    bagging_rank: int
    flagged_by_scan: bool


@dataclass
class DetectorComparison:
    rows: list[ComparisonRow]
    top_m: int
    jaccard: dict[str, float | None] = field(default_factory=dict)


def _ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks, highest score first; ties broken by data index."""
    order = np.lexsort((np.arange(len(scores)), -scores))
    ranks = np.empty(len(scores), dtype=int)
    ranks[order] = np.arange(1, len(scores) + 1)
    return ranks


def _jaccard(a: set, b: set) -> float | None:
    if not a and not b:
        return None  # undefined for empty top sets
    union = a | b
    return len(a & b) / len(union)


def compare_detectors(vectors: np.ndarray, keys: list, scan_outliers: list,
                      iforest: IsolationForestParams,
                      bagging: FeatureBaggingParams,
                      top_m: int | None = None) -> DetectorComparison:
    """Score every series with both detectors and compare against the scan.

    top_m defaults to the scan's outlier count; Jaccard overlaps of the
    top-m sets are None (undefined) when the top sets are empty.
    """
    if_scores = isolation_forest_scores(vectors, iforest)
    fb_scores = feature_bagging_scores(vectors, bagging)
    if_ranks = _ranks(if_scores)
    fb_ranks = _ranks(fb_scores)
    flagged = set(scan_outliers)
    rows = [ComparisonRow(key=key, index=i,
                          iforest_score=float(if_scores[i]),
                          iforest_rank=int(if_ranks[i]),
                          bagging_score=float(fb_scores[i]),
                          bagging_rank=int(fb_ranks[i]),
                          flagged_by_scan=key in flagged)
            for i, key in enumerate(keys)]
    m = len(flagged) if top_m is None else top_m
    top_if = {keys[i] for i in range(len(keys)) if if_ranks[i] <= m}
    top_fb = {keys[i] for i in range(len(keys)) if fb_ranks[i] <= m}
    comparison = DetectorComparison(rows=rows, top_m=m)
    comparison.jaccard = {
        "iforest_vs_scan": _jaccard(top_if, flagged),
        "bagging_vs_scan": _jaccard(top_fb, flagged),
        "iforest_vs_bagging": _jaccard(top_if, top_fb),
    }
    return comparison
