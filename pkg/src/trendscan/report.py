"""Report assembly, file emission, and the end-to-end run pipeline.

The report proper (report.json, series dumps, plot data, comparisons) is
fully deterministic for a fixed config and seed: wall-clock timings and
timestamps are deliberately kept out of it and written to a separate
timings.json sidecar instead, so repeated runs and different worker
counts produce byte-identical reports.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from trendscan import __version__
from trendscan.config import RunConfig
from trendscan.detectors import compare_detectors
from trendscan.errors import DataError, TrendscanError
from trendscan.features import rank_features
from trendscan.ingest import (CleanRecord, clean, load_crosswalk, load_table,
                              normalize_codes, write_drop_log)
from trendscan.lattice import LatticeNode, ScanReport, execute_node, run_piks


class StageError(TrendscanError):
    """Wraps a failure with the pipeline stage it happened in."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class RunOutputs:
    report: ScanReport
    report_path: Path
    written: list[Path] = field(default_factory=list)
    records: list[CleanRecord] = field(default_factory=list)


def node_tag(node: LatticeNode) -> str:
    safe = "-".join("".join(ch if ch.isalnum() else "_" for ch in m)
                    for m in node.members)
    return f"node{node.num:03d}_{safe}"


def outlier_label(key: tuple) -> str:
    return " ".join(key)


def report_dict(config: RunConfig, scan: ScanReport) -> dict:
    """The deterministic report body (no timings, no timestamps)."""
    nodes = []
    for node in scan.node_list():
        entry = {
            "num": node.num,
            "members": list(node.members),
            "level": node.level,
            "status": node.status,
            "series_count": node.series_count,
            "rejected_count": node.rejected_count,
            "outlier_count": node.outlier_count,
            "pruned_by": node.pruned_by,
            "iterations_run": None,
            "terminated_by": None,
            "outliers": [],
        }
        if node.result is not None:
            entry["iterations_run"] = node.result.iterations_run
            entry["terminated_by"] = node.result.terminated_by
            series_by_key = {sv.key: sv for sv in node.series.series}
            for key, iteration in node.result.outliers:
                entry["outliers"].append({
                    "key": list(key),
                    "label": outlier_label(key),
                    "removed_at_iteration": iteration,
                    "cluster_history": node.result.label_history[key],
                    "pct": [float(v) for v in series_by_key[key].pct],
                })
        nodes.append(entry)
    return {
        "metadata": {
            "tool": f"trendscan {__version__}",
            "config_hash": config.config_hash,
            "seed": config.scan.kmeans.seed,
        },
        "config": config.resolved,
        "nodes": nodes,
        "stats": {
            "total_nodes": scan.stats.total,
            "executed": scan.stats.executed,
            "unqualified": scan.stats.unqualified,
            "pruned": scan.stats.pruned,
        },
    }


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_series_dump(path: Path, node: LatticeNode, years: tuple[int, ...],
                      delimiter: str = ",") -> None:
    """Flat dump of a node's series: key columns, year, raw, pct."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter=delimiter)
        writer.writerow([*node.members, "year", "raw", "pct"])
        for sv in node.series.series:
            for i, year in enumerate(years):
                writer.writerow([*sv.key, year, str(sv.raw[year]),
                                 repr(float(sv.pct[i]))])


def write_plot_data(path: Path, node: LatticeNode, years: tuple[int, ...],
                    delimiter: str = ",") -> None:
    """Plot-ready rows: key columns, year, pct, cluster id, outlier flag."""
    result = node.result
    outliers = set(node.outliers)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter=delimiter)
        writer.writerow([*node.members, "year", "pct", "cluster", "is_outlier"])
        for sv in node.series.series:
            history = result.label_history.get(sv.key, []) if result else []
            cluster = history[-1] if history else ""
            flag = 1 if sv.key in outliers else 0
            for i, year in enumerate(years):
                writer.writerow([*sv.key, year, repr(float(sv.pct[i])),
                                 cluster, flag])


def emit_comparison(path: Path, universe: set[str],
                    columns: dict[str, list[str]],
                    delimiter: str = ",") -> dict[str, float | None]:
    """Side-by-side alphabetical outlier labels per method, plus Jaccard.

    Every method's labels must come from the same series universe;
    anything else indicates the methods ran on different matrices.
    """
    for method, labels in columns.items():
        stray = [lab for lab in labels if lab not in universe]
        if stray:
            raise DataError(f"comparison: {method} labels not in the series "
                            f"universe: {stray[:3]}")
    sorted_cols = {m: sorted(set(labels)) for m, labels in columns.items()}
    height = max((len(v) for v in sorted_cols.values()), default=0)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter=delimiter)
        methods = list(sorted_cols)
        writer.writerow(methods)
        for i in range(height):
            writer.writerow([sorted_cols[m][i] if i < len(sorted_cols[m]) else ""
                             for m in methods])
    jaccard: dict[str, float | None] = {}
    names = list(sorted_cols)
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            a, b = set(sorted_cols[names[i]]), set(sorted_cols[names[j]])
            key = f"{names[i]}_vs_{names[j]}"
            jaccard[key] = None if not (a | b) else len(a & b) / len(a | b)
    return jaccard


def write_comparison_table(path: Path, comparison, delimiter: str = ",") -> None:
    """Per-series detector scores/ranks mirroring the comparison table layout."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter=delimiter)
        writer.writerow(["method", "rank", "score", "data_index", "description"])
        for row in sorted(comparison.rows, key=lambda r: r.iforest_rank):
            writer.writerow(["isolation_forest", row.iforest_rank,
                             repr(row.iforest_score), row.index,
                             outlier_label(row.key)])
        for row in sorted(comparison.rows, key=lambda r: r.bagging_rank):
            writer.writerow(["feature_bagging", row.bagging_rank,
                             repr(row.bagging_score), row.index,
                             outlier_label(row.key)])


def ingest(config: RunConfig, drop_log: Path | None = None):
    """Load, clean and (optionally) code-normalize every configured dataset."""
    records: list[CleanRecord] = []
    total_drops = 0
    for dataset in config.datasets:
        rows = load_table(dataset, config.schema, delimiter=config.delimiter)
        result = clean(rows, config.schema)
        total_drops += result.drop_count
        if drop_log is not None and result.drops:
            write_drop_log(drop_log, result.drops, source=dataset.name)
        records.extend(result.records)
    if config.crosswalk_path is not None:
        crosswalk = load_crosswalk(config.crosswalk_path,
                                   unmapped_policy=config.crosswalk_policy,
                                   delimiter=config.delimiter)
        records = normalize_codes(records, crosswalk, config.schema.code_column)
    if not records:
        raise DataError("no-data: every row was dropped or the datasets are empty")
    if not any(rec.year == config.schema.baseline_year for rec in records):
        raise DataError(f"no-data: baseline year {config.schema.baseline_year} "
                        "absent from the cleaned data")
    return records, total_drops


def run(config: RunConfig, threads: int = 1) -> RunOutputs:
    """Execute ingest -> (optional ranking) -> lattice scan -> emission.

    Any stage failure aborts with a stage-tagged error and removes files
    written so far.
    """
    out_dir = config.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def track(path: Path) -> Path:
        written.append(path)
        return path

    started = time.time()
    try:
        drop_log = track(out_dir / "drops.log")
        drop_log.unlink(missing_ok=True)
        try:
            records, _ = ingest(config, drop_log=drop_log)
        except TrendscanError as exc:
            raise StageError("ingest", exc) from exc

        if config.rank_measure is not None:
            try:
                scores = rank_features(records, list(config.scan.features),
                                       config.rank_measure, config.rank_bins)
                with track(out_dir / "feature_ranks.csv").open(
                        "w", newline="", encoding="utf-8") as fh:
                    writer = csv.writer(fh, delimiter=config.delimiter)
                    writer.writerow(["rank", "feature", "mutual_info", "chi2"])
                    for s in scores:
                        writer.writerow([s.rank, s.feature, repr(s.mutual_info),
                                         repr(s.chi2)])
            except (ValueError, KeyError) as exc:
                raise StageError("rank-features", exc) from exc

        try:
            scan = run_piks(records, config.scan, threads=threads)
        except Exception as exc:
            raise StageError("scan", exc) from exc

        try:
            report_path = track(out_dir / "report.json")
            _write_json(report_path, report_dict(config, scan))
            for node in scan.node_list():
                if node.status != "executed":
                    continue
                tag = node_tag(node)
                write_series_dump(track(out_dir / "series" / f"{tag}.csv"),
                                  node, config.scan.years, config.delimiter)
                write_plot_data(track(out_dir / "plots" / f"{tag}.csv"),
                                node, config.scan.years, config.delimiter)
            _write_json(track(out_dir / "timings.json"), {
                "wall_time_seconds": time.time() - started,
                "scan_wall_time_seconds": scan.stats.wall_time,
                "node_seconds": {str(num): t
                                 for num, t in sorted(scan.stats.node_times.items())},
                "threads": threads,
            })
        except OSError as exc:
            raise StageError("emit", exc) from exc
    except Exception:
        for path in written:
            path.unlink(missing_ok=True)
        raise
    return RunOutputs(report=scan, report_path=report_path, written=written,
                      records=records)


def run_node_comparison(config: RunConfig, members: list[str],
                        out_dir: Path) -> dict:
    """Scan one node, run both detectors on its series, emit comparisons."""
    records, _ = ingest(config)
    features = config.scan.features
    missing = [m for m in members if m not in features]
    if missing:
        raise DataError(f"node members not in scan features: {missing}")
    num = 0
    for i, f in enumerate(features):
        if f in members:
            num |= 1 << i
    node = execute_node(num, records, config.scan)
    if not node.qualified:
        raise DataError(f"node {members} has {node.series_count} series, "
                        f"below the threshold {config.scan.row_threshold}")
    if not node.series.series:
        raise DataError(f"node {members}: every group was rejected "
                        "(zero/missing baselines); nothing to score")
    if len(node.series.series) <= config.bagging.lof.k_neighbors:
        raise DataError(
            f"node {members} has only {len(node.series.series)} scorable "
            f"series; LOF needs more than k_neighbors="
            f"{config.bagging.lof.k_neighbors}")
    matrix = np.vstack([sv.pct for sv in node.series.series])
    keys = [sv.key for sv in node.series.series]
    comparison = compare_detectors(matrix, keys, node.outliers,
                                   config.iforest, config.bagging)
    out_dir.mkdir(parents=True, exist_ok=True)
    tag = node_tag(node)
    write_comparison_table(out_dir / f"baseline_{tag}.csv", comparison,
                           config.delimiter)
    universe = {outlier_label(k) for k in keys}
    m = comparison.top_m if comparison.top_m > 0 else 3
    columns = {
        "scan": [outlier_label(k) for k in node.outliers],
        "isolation_forest": [outlier_label(r.key) for r in comparison.rows
                             if r.iforest_rank <= m],
        "feature_bagging": [outlier_label(r.key) for r in comparison.rows
                            if r.bagging_rank <= m],
    }
    jaccard = emit_comparison(out_dir / f"comparison_{tag}.csv", universe,
                              columns, config.delimiter)
    _write_json(out_dir / f"comparison_{tag}_stats.json", {
        "node": list(node.members),
        "top_m": m,
        "jaccard": jaccard,
        "detector_jaccard": comparison.jaccard,
    })
    return {"node": node, "comparison": comparison, "jaccard": jaccard}
