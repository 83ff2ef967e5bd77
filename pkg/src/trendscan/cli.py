"""Command-line surface.

Subcommands: ingest-check, rank-features, run, baseline, compare.
Exit codes: 0 success, 1 validation error, 2 data error, 3 internal error.
Worker threads default to the TRENDSCAN_THREADS environment variable;
--threads overrides it.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from collections import Counter

from trendscan.config import RunConfig, load_config
from trendscan.errors import ConfigError, DataError
from trendscan.features import rank_features
from trendscan.report import ingest, run, run_node_comparison

THREADS_ENV = "TRENDSCAN_THREADS"


def _effective_threads(flag: int | None) -> int:
    if flag is not None:
        if flag < 1:
            raise ConfigError("--threads must be >= 1")
        return flag
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return 1


def _load(args) -> RunConfig:
    return load_config(args.config, seed=getattr(args, "seed", None),
                       no_prune=getattr(args, "no_prune", False),
                       out_dir=getattr(args, "out_dir", None))


def cmd_ingest_check(args) -> int:
    config = _load(args)
    out_dir = config.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    drop_log = out_dir / "drops.log"
    drop_log.unlink(missing_ok=True)
    records, drops = ingest(config, drop_log=drop_log)
    years = Counter(rec.year for rec in records)
    print(f"datasets: {', '.join(str(p) for p in config.datasets)}")
    print(f"records kept: {len(records)}")
    print(f"records dropped: {drops} (see {drop_log})" if drops
          else "records dropped: 0")
    print("years: " + ", ".join(f"{y}:{c}" for y, c in sorted(years.items())))
    return 0


def cmd_rank_features(args) -> int:
    config = _load(args)
    if config.rank_measure is None:
        raise ConfigError("rank_features section missing from the config")
    records, _ = ingest(config)
    scores = rank_features(records, list(config.scan.features),
                           config.rank_measure, config.rank_bins)
    config.out_dir.mkdir(parents=True, exist_ok=True)
    out = config.out_dir / "feature_ranks.csv"
    with out.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter=config.delimiter)
        writer.writerow(["rank", "feature", "mutual_info", "chi2"])
        for s in scores:
            writer.writerow([s.rank, s.feature, repr(s.mutual_info), repr(s.chi2)])
    for s in scores:
        print(f"{s.rank:>4}  {s.feature}  mi={s.mutual_info:.6f}  chi2={s.chi2:.3f}")
    print(f"wrote {out}")
    return 0


def cmd_run(args) -> int:
    config = _load(args)
    threads = _effective_threads(args.threads)
    outputs = run(config, threads=threads)
    stats = outputs.report.stats
    print(f"nodes: {stats.total} total, {stats.executed} executed, "
          f"{stats.unqualified} unqualified, {stats.pruned} pruned")
    flagged = sum(n.outlier_count or 0 for n in outputs.report.node_list())
    print(f"outliers flagged: {flagged}")
    print(f"report: {outputs.report_path}")
    return 0


def _parse_node(arg: str) -> list[str]:
    members = [m.strip() for m in arg.split(",") if m.strip()]
    if not members:
        raise ConfigError("--node needs a comma-separated list of feature names")
    return members


def cmd_baseline(args) -> int:
    config = _load(args)
    result = run_node_comparison(config, _parse_node(args.node), config.out_dir)
    comparison = result["comparison"]
    top = sorted(comparison.rows, key=lambda r: r.iforest_rank)[:5]
    print("top isolation-forest series:")
    for row in top:
        print(f"  rank {row.iforest_rank}: score {row.iforest_score:.5f} "
              f"index {row.index}  {' '.join(row.key)}")
    return 0


def cmd_compare(args) -> int:
    config = _load(args)
    result = run_node_comparison(config, _parse_node(args.node), config.out_dir)
    node = result["node"]
    print(f"node {list(node.members)}: {node.outlier_count} scan outliers, "
          f"top-{result['comparison'].top_m} overlap {result['jaccard']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trendscan",
        description="Discover outlying trend series across feature-subset "
                    "aggregations of categorical/temporal tables.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True, out=True):
        p.add_argument("--config", required=True, help="run configuration JSON")
        if seed:
            p.add_argument("--seed", type=int, default=None,
                           help="override every configured seed")
        if out:
            p.add_argument("--out-dir", default=None, help="override output directory")

    p = sub.add_parser("ingest-check", help="load and clean the datasets, report drops")
    common(p, seed=False)
    p.set_defaults(func=cmd_ingest_check)

    p = sub.add_parser("rank-features", help="rank scan features against a measure")
    common(p, seed=False)
    p.set_defaults(func=cmd_rank_features)

    p = sub.add_parser("run", help="full lattice scan with report emission")
    common(p)
    p.add_argument("--no-prune", action="store_true",
                   help="execute every qualified node (disable pruning)")
    p.add_argument("--threads", type=int, default=None,
                   help=f"worker threads (default: ${THREADS_ENV} or 1)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("baseline", help="run the cross-check detectors on one node")
    common(p)
    p.add_argument("--node", required=True,
                   help="comma-separated feature names identifying the node")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("compare", help="compare scan outliers with the detectors")
    common(p)
    p.add_argument("--node", required=True,
                   help="comma-separated feature names identifying the node")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        cause = getattr(exc, "cause", None)
        if isinstance(cause, ConfigError):
            print(f"error: {exc}", file=sys.stderr)
            return 1
        if isinstance(cause, DataError):
            print(f"error: {exc}", file=sys.stderr)
            return 2
        print(f"internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
