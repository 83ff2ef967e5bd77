"""Breadth-first scan of the feature-subset lattice with zero-outlier pruning.

Every non-empty subset of the selected features is a node; nodes are
visited level by level (subset size ascending, bitmask ascending within a
level). A node below the row-count threshold is recorded but not
clustered and does not prune. A node whose clustering finds zero outliers
marks every descendant (transitive superset) done, so they are skipped.
Per-node seeds are derived as seed XOR bitmask, which makes node results
independent of traversal order and worker count.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from trendscan.aggregate import AtomCube, FeatureSubset, Measure, SeriesSet, build_series
from trendscan.cluster import IterativeKMeansResult, KMeansParams, iterative_kmeans
from trendscan.errors import ConfigError
from trendscan.ingest import CleanRecord

MAX_FEATURES = 16


@dataclass(frozen=True)
class PiksConfig:
    """Everything the lattice scan needs to run."""

    features: tuple[str, ...]
    years: tuple[int, ...]
    baseline_year: int
    measure: Measure = Measure(kind="count")
    row_threshold: int = 50
    kmeans: KMeansParams = KMeansParams()
    pruning_enabled: bool = True

    def __post_init__(self):
        if not 1 <= len(self.features) <= MAX_FEATURES:
            raise ConfigError(f"between 1 and {MAX_FEATURES} features required")
        if len(set(self.features)) != len(self.features):
            raise ConfigError("scan features must be distinct")
        if self.row_threshold < 1:
            raise ConfigError("row_threshold must be >= 1")
        if not self.years:
            raise ConfigError("years must be non-empty")
        if self.baseline_year not in self.years:
            raise ConfigError(f"baseline year {self.baseline_year} not in years")


@dataclass
class LatticeNode:
    num: int
    members: tuple[str, ...]
    level: int
    done: bool = False
    qualified: bool = False
    series_count: int | None = None     # None until aggregated (pruned nodes stay None)
    rejected_count: int = 0
    outlier_count: int | None = None    # set iff qualified and executed
    outliers: list = field(default_factory=list)  # series keys, removal order
    pruned_by: int | None = None
    result: IterativeKMeansResult | None = None
    series: SeriesSet | None = None
    elapsed: float = 0.0

    @property
    def status(self) -> str:
        if self.pruned_by is not None:
            return "pruned"
        return "executed" if self.qualified else "unqualified"


@dataclass
class ScanStats:
    executed: int = 0
    unqualified: int = 0
    pruned: int = 0
    wall_time: float = 0.0
    node_times: dict[int, float] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return self.executed + self.unqualified + self.pruned


@dataclass
class ScanReport:
    config: PiksConfig
    nodes: dict[int, LatticeNode]
    stats: ScanStats

    def node_list(self) -> list[LatticeNode]:
        return [self.nodes[num] for num in sorted(self.nodes)]

    def outlier_nodes(self) -> list[LatticeNode]:
        return [n for n in self.node_list() if n.outlier_count]


def enumerate_level(n_features: int, level: int) -> list[int]:
    """All bitmasks over n_features with popcount == level, ascending."""
    if not 1 <= level <= n_features:
        raise ValueError(f"level {level} out of range 1..{n_features}")
    return [num for num in range(1, 1 << n_features)
            if num.bit_count() == level]


def descendants(num: int, n_features: int) -> set[int]:
    """All strict supersets of num within n_features bits."""
    universe = (1 << n_features) - 1
    if not 1 <= num <= universe:
        raise ValueError(f"bitmask {num} out of range for {n_features} features")
    rest = universe & ~num
    out = set()
    sub = rest
    while sub:
        out.add(num | sub)
        sub = (sub - 1) & rest
    return out


def execute_node(num: int, records: list[CleanRecord], config: PiksConfig,
                 series_set: SeriesSet | None = None) -> LatticeNode:
    """Aggregate one subset and, if it qualifies, run the outlier remover.

    A node with fewer groups than row_threshold is marked done but not
    clustered (and never prunes). Passing series_set skips the aggregation
    (used by the scan, which projects a shared atom cube).
    """
    subset = FeatureSubset(num=num, features=config.features)
    started = time.perf_counter()
    if series_set is None:
        series_set = build_series(records, subset, config.measure,
                                  list(config.years), config.baseline_year)
    node = LatticeNode(num=num, members=subset.members, level=subset.level,
                       series_count=series_set.group_count,
                       rejected_count=len(series_set.rejections),
                       series=series_set)
    if series_set.group_count < config.row_threshold:
        node.done = True
        node.elapsed = time.perf_counter() - started
        return node
    node.qualified = True
    keys = [sv.key for sv in series_set.series]
    if keys:
        matrix = np.vstack([sv.pct for sv in series_set.series])
        result = iterative_kmeans(matrix, config.kmeans.with_seed(
            config.kmeans.seed ^ num), ids=keys)
        node.result = result
        node.outliers = result.outlier_ids
        node.outlier_count = len(result.outliers)
    else:
        node.outlier_count = 0
    node.done = True
    node.elapsed = time.perf_counter() - started
    return node


def run_piks(records: list[CleanRecord], config: PiksConfig,
             threads: int = 1) -> ScanReport:
    """Scan the whole lattice breadth-first and collect every node's outcome.

    Nodes within a level may run on a thread pool; pruning marks are
    applied at the level barrier in ascending node order, which makes the
    report identical to a sequential traversal.
    """
    n = len(config.features)
    cube = AtomCube.from_records(records, config.features, config.measure,
                                 list(config.years), config.baseline_year)
    nodes: dict[int, LatticeNode] = {}
    stats = ScanStats()
    started = time.perf_counter()

    def run_one(num: int) -> LatticeNode:
        return execute_node(num, records, config, series_set=cube.project(
            FeatureSubset(num=num, features=config.features)))

    for level in range(1, n + 1):
        level_nums = [num for num in enumerate_level(n, level)
                      if num not in nodes]  # pruned nodes already recorded
        if threads > 1 and len(level_nums) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(run_one, level_nums))
        else:
            results = [run_one(num) for num in level_nums]
        # barrier: apply results and pruning marks in ascending node order
        for node in results:
            nodes[node.num] = node
            if node.qualified:
                stats.executed += 1
            else:
                stats.unqualified += 1
            stats.node_times[node.num] = node.elapsed
        if config.pruning_enabled:
            for node in results:
                if node.qualified and node.outlier_count == 0:
                    for desc in sorted(descendants(node.num, n)):
                        if desc not in nodes:
                            subset = FeatureSubset(num=desc, features=config.features)
                            nodes[desc] = LatticeNode(
                                num=desc, members=subset.members,
                                level=subset.level, done=True, pruned_by=node.num)
                            stats.pruned += 1
    stats.wall_time = time.perf_counter() - started
    return ScanReport(config=config, nodes=nodes, stats=stats)
