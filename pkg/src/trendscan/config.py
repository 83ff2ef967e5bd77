"""Run configuration: JSON file loading, validation, defaults, hashing.

Validation errors name the offending field path (e.g. scan.features[2]).
The fully-resolved configuration (defaults applied) is what gets hashed
and echoed into the report, so the hash is stable under key reordering in
the source file.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from trendscan.aggregate import Measure
from trendscan.cluster import KMeansParams
from trendscan.detectors import FeatureBaggingParams, IsolationForestParams, LofParams
from trendscan.errors import ConfigError
from trendscan.ingest import DEFAULT_MISSING, DatasetSchema
from trendscan.lattice import PiksConfig

KMEANS_DEFAULTS = {"k": 8, "small_cluster_max": 2, "max_outer_iterations": 10,
                   "lloyd_max_iterations": 300, "convergence_tol": 1e-6, "seed": 0}
IFOREST_DEFAULTS = {"n_trees": 100, "subsample": 256, "max_depth": None, "seed": 0}
BAGGING_DEFAULTS = {"rounds": 10, "k_neighbors": 10, "seed": 0}


@dataclass
class RunConfig:
    datasets: tuple[Path, ...]
    delimiter: str
    schema: DatasetSchema
    scan: PiksConfig
    iforest: IsolationForestParams
    bagging: FeatureBaggingParams
    out_dir: Path
    crosswalk_path: Path | None = None
    crosswalk_policy: str = "keep_verbatim"
    rank_measure: str | None = None
    rank_bins: int = 4
    resolved: dict | None = None  # defaults applied; basis of the config hash

    @property
    def config_hash(self) -> str:
        canonical = json.dumps(self.resolved, sort_keys=True,
                               separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()


def _expect(mapping: dict, key: str, types, path: str, default=...):
    where = f"{path}.{key}" if path else key
    value = mapping.get(key)
    if value is None:  # explicit null behaves like omission
        if default is ...:
            raise ConfigError(f"{where}: required field is missing")
        return default
    if types is not None and not isinstance(value, types):
        raise ConfigError(f"{where}: expected {getattr(types, '__name__', types)}, "
                          f"got {type(value).__name__}")
    return value


def _string_list(value, path: str) -> list[str]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ConfigError(f"{path}: expected a list of strings")
    return value


def load_config(path: str | Path, seed: int | None = None,
                no_prune: bool = False, out_dir: str | None = None) -> RunConfig:
    """Load and validate a run configuration file.

    seed/no_prune/out_dir are command-line overrides; they are applied
    before hashing so the report reflects what actually ran.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    base = path.parent

    dataset = raw.get("dataset")
    if isinstance(dataset, str):
        datasets = [dataset]
    elif isinstance(dataset, list) and dataset and all(isinstance(d, str) for d in dataset):
        datasets = dataset
    else:
        raise ConfigError("dataset: expected a path or non-empty list of paths")
    dataset_paths = tuple((base / d).resolve() for d in datasets)
    for p in dataset_paths:
        if not p.exists():
            raise ConfigError(f"dataset: file not found: {p}")

    delimiter = _expect(raw, "delimiter", str, "", default=",")

    sraw = _expect(raw, "schema", dict, "")
    feature_columns = _string_list(_expect(sraw, "feature_columns", list, "schema"),
                                   "schema.feature_columns")
    year_column = _expect(sraw, "year_column", str, "schema")
    baseline_year = _expect(sraw, "baseline_year", int, "schema")
    measures_raw = _expect(sraw, "measure_columns", list, "schema", default=[])
    measure_columns = []
    for i, m in enumerate(measures_raw):
        mpath = f"schema.measure_columns[{i}]"
        if not isinstance(m, dict):
            raise ConfigError(f"{mpath}: expected an object")
        measure_columns.append((_expect(m, "name", str, mpath),
                                _expect(m, "kind", str, mpath)))
    code_column = _expect(sraw, "code_column", str, "schema", default=None)
    sentinels = _expect(sraw, "missing_sentinels", list, "schema",
                        default=list(DEFAULT_MISSING))
    try:
        schema = DatasetSchema(
            feature_columns=tuple(feature_columns), year_column=year_column,
            measure_columns=tuple(measure_columns), baseline_year=baseline_year,
            code_column=code_column,
            missing_sentinels=tuple(_string_list(sentinels, "schema.missing_sentinels")))
    except ConfigError as exc:
        raise ConfigError(f"schema: {exc}") from None

    craw = _expect(raw, "crosswalk", dict, "", default=None)
    crosswalk_path = None
    crosswalk_policy = "keep_verbatim"
    if craw is not None:
        crosswalk_path = (base / _expect(craw, "path", str, "crosswalk")).resolve()
        if not crosswalk_path.exists():
            raise ConfigError(f"crosswalk.path: file not found: {crosswalk_path}")
        crosswalk_policy = _expect(craw, "unmapped_policy", str, "crosswalk",
                                   default="keep_verbatim")
        if schema.code_column is None:
            raise ConfigError("crosswalk: schema.code_column must be set when "
                              "a crosswalk is configured")

    scan_raw = _expect(raw, "scan", dict, "")
    features = _string_list(
        _expect(scan_raw, "features", list, "scan", default=list(feature_columns)),
        "scan.features")
    for i, f in enumerate(features):
        if f not in schema.feature_columns:
            raise ConfigError(f"scan.features[{i}]: {f!r} is not a schema feature column")
    years = _expect(scan_raw, "years", list, "scan")
    if not years or not all(isinstance(y, int) for y in years):
        raise ConfigError("scan.years: expected a non-empty list of integers")
    if baseline_year not in years:
        raise ConfigError(f"scan.years: baseline year {baseline_year} not in list")
    row_threshold = _expect(scan_raw, "row_threshold", int, "scan", default=50)
    pruning = _expect(scan_raw, "pruning_enabled", bool, "scan", default=True)
    if no_prune:
        pruning = False

    measure_raw = _expect(scan_raw, "measure", dict, "scan", default={"kind": "count"})
    kind = _expect(measure_raw, "kind", str, "scan.measure", default="count")
    mfield = _expect(measure_raw, "field", str, "scan.measure", default=None)
    if kind == "mean":
        names = [name for name, _ in schema.measure_columns]
        if mfield not in names:
            raise ConfigError(f"scan.measure.field: {mfield!r} is not a schema measure")
    try:
        measure = Measure(kind=kind, field=mfield)
    except ConfigError as exc:
        raise ConfigError(f"scan.measure: {exc}") from None

    kraw = dict(KMEANS_DEFAULTS)
    kraw.update(_expect(scan_raw, "kmeans", dict, "scan", default={}))
    if seed is not None:
        kraw["seed"] = seed
    try:
        kparams = KMeansParams(
            k=int(kraw["k"]), small_cluster_max=int(kraw["small_cluster_max"]),
            max_outer_iterations=int(kraw["max_outer_iterations"]),
            lloyd_max_iterations=int(kraw["lloyd_max_iterations"]),
            convergence_tol=float(kraw["convergence_tol"]), seed=int(kraw["seed"]))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"scan.kmeans: {exc}") from None

    try:
        scan = PiksConfig(features=tuple(features), years=tuple(years),
                          baseline_year=baseline_year, measure=measure,
                          row_threshold=row_threshold, kmeans=kparams,
                          pruning_enabled=pruning)
    except ConfigError as exc:
        raise ConfigError(f"scan: {exc}") from None

    braw = _expect(raw, "baselines", dict, "", default={})
    iraw = dict(IFOREST_DEFAULTS)
    iraw.update(_expect(braw, "isolation_forest", dict, "baselines", default={}))
    fraw = dict(BAGGING_DEFAULTS)
    fraw.update(_expect(braw, "feature_bagging", dict, "baselines", default={}))
    if seed is not None:
        iraw["seed"] = seed
        fraw["seed"] = seed
    try:
        iforest = IsolationForestParams(
            n_trees=int(iraw["n_trees"]), subsample=int(iraw["subsample"]),
            max_depth=None if iraw["max_depth"] is None else int(iraw["max_depth"]),
            seed=int(iraw["seed"]))
        bagging = FeatureBaggingParams(
            rounds=int(fraw["rounds"]), lof=LofParams(int(fraw["k_neighbors"])),
            seed=int(fraw["seed"]))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"baselines: {exc}") from None

    rraw = _expect(raw, "rank_features", dict, "", default=None)
    rank_measure, rank_bins = None, 4
    if rraw is not None:
        rank_measure = _expect(rraw, "measure", str, "rank_features")
        rank_bins = _expect(rraw, "n_bins", int, "rank_features", default=4)
        names = [name for name, _ in schema.measure_columns]
        if rank_measure not in names:
            raise ConfigError(f"rank_features.measure: {rank_measure!r} "
                              "is not a schema measure")
        if rank_bins < 2:
            raise ConfigError("rank_features.n_bins: must be >= 2")

    out = Path(out_dir) if out_dir else base / _expect(raw, "out_dir", str, "",
                                                       default="out")

    resolved = {
        "dataset": [str(p) for p in dataset_paths],
        "delimiter": delimiter,
        "schema": {
            "feature_columns": list(schema.feature_columns),
            "year_column": schema.year_column,
            "measure_columns": [{"name": n, "kind": k}
                                for n, k in schema.measure_columns],
            "baseline_year": schema.baseline_year,
            "code_column": schema.code_column,
            "missing_sentinels": list(schema.missing_sentinels),
        },
        "crosswalk": None if crosswalk_path is None else {
            "path": str(crosswalk_path), "unmapped_policy": crosswalk_policy},
        "scan": {
            "features": list(scan.features),
            "years": list(scan.years),
            "row_threshold": scan.row_threshold,
            "pruning_enabled": scan.pruning_enabled,
            "measure": {"kind": measure.kind, "field": measure.field},
            "kmeans": {"k": kparams.k, "small_cluster_max": kparams.small_cluster_max,
                       "max_outer_iterations": kparams.max_outer_iterations,
                       "lloyd_max_iterations": kparams.lloyd_max_iterations,
                       "convergence_tol": kparams.convergence_tol,
                       "seed": kparams.seed},
        },
        "baselines": {
            "isolation_forest": {"n_trees": iforest.n_trees,
                                 "subsample": iforest.subsample,
                                 "max_depth": iforest.max_depth,
                                 "seed": iforest.seed},
            "feature_bagging": {"rounds": bagging.rounds,
                                "k_neighbors": bagging.lof.k_neighbors,
                                "seed": bagging.seed},
        },
        "rank_features": None if rank_measure is None else {
            "measure": rank_measure, "n_bins": rank_bins},
    }
    return RunConfig(datasets=dataset_paths, delimiter=delimiter, schema=schema,
                     scan=scan, iforest=iforest, bagging=bagging, out_dir=out,
                     crosswalk_path=crosswalk_path, crosswalk_policy=crosswalk_policy,
                     rank_measure=rank_measure, rank_bins=rank_bins,
                     resolved=resolved)
