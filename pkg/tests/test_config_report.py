"""Configuration loading/validation and report emission."""

import json

import pytest

import gen
from trendscan.config import load_config
from trendscan.errors import ConfigError, DataError
from trendscan.report import emit_comparison, ingest, report_dict, run

FEATURES = list(gen.SWEEP_FEATURES)


@pytest.fixture
def workspace(tmp_path):
    data = tmp_path / "data.csv"
    gen.write_records_csv(data, gen.sweep_records(0), FEATURES)
    config = {
        "dataset": "data.csv",
        "schema": {
            "feature_columns": FEATURES,
            "year_column": "Year",
            "baseline_year": int(gen.SWEEP_YEARS[0]),
        },
        "scan": {
            "years": [int(y) for y in gen.SWEEP_YEARS],
            "row_threshold": 6,
            "kmeans": {"k": 4, "seed": 11},
        },
        "out_dir": "out",
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    return tmp_path, path, config


class TestLoadConfig:
    def test_defaults_filled(self, workspace):
        _, path, _ = workspace
        config = load_config(path)
        assert config.scan.kmeans.small_cluster_max == 2
        assert config.scan.kmeans.max_outer_iterations == 10
        assert config.scan.row_threshold == 6
        assert config.iforest.n_trees == 100
        assert config.bagging.rounds == 10
        assert config.resolved["scan"]["kmeans"]["small_cluster_max"] == 2

    def test_unknown_feature_named_in_error(self, workspace):
        tmp_path, path, raw = workspace
        raw["scan"]["features"] = FEATURES[:2] + ["mystery"]
        path.write_text(json.dumps(raw))
        with pytest.raises(ConfigError, match=r"scan\.features\[2\].*mystery"):
            load_config(path)

    def test_missing_dataset_rejected(self, workspace):
        tmp_path, path, raw = workspace
        raw["dataset"] = "absent.csv"
        path.write_text(json.dumps(raw))
        with pytest.raises(ConfigError, match="absent.csv"):
            load_config(path)

    def test_baseline_must_be_in_years(self, workspace):
        tmp_path, path, raw = workspace
        raw["schema"]["baseline_year"] = 1990
        path.write_text(json.dumps(raw))
        with pytest.raises(ConfigError, match="baseline"):
            load_config(path)

    def test_round_trip(self, workspace):
        tmp_path, path, _ = workspace
        first = load_config(path)
        rewritten = tmp_path / "resolved.json"
        rewritten.write_text(json.dumps(first.resolved))
        second = load_config(rewritten)
        assert second.resolved == first.resolved
        assert second.schema == first.schema
        assert second.scan == first.scan
        assert second.config_hash == first.config_hash

    def test_hash_stable_under_reordering(self, workspace):
        tmp_path, path, raw = workspace
        a = load_config(path)
        reordered = {k: raw[k] for k in reversed(list(raw))}
        reordered["schema"] = dict(reversed(list(raw["schema"].items())))
        other = tmp_path / "other.json"
        other.write_text(json.dumps(reordered))
        assert load_config(other).config_hash == a.config_hash

    def test_overrides_affect_hash_and_scan(self, workspace):
        _, path, _ = workspace
        base = load_config(path)
        reseeded = load_config(path, seed=99)
        assert reseeded.scan.kmeans.seed == 99
        assert reseeded.iforest.seed == 99
        assert reseeded.config_hash != base.config_hash
        unpruned = load_config(path, no_prune=True)
        assert not unpruned.scan.pruning_enabled


class TestRun:
    def test_fixture_run_emits_consistent_files(self, workspace):
        tmp_path, path, _ = workspace
        outputs = run(load_config(path))
        report = json.loads(outputs.report_path.read_text())
        stats = report["stats"]
        assert stats["executed"] + stats["unqualified"] + stats["pruned"] == 2 ** 4 - 1
        executed = [n for n in report["nodes"] if n["status"] == "executed"]
        assert len(executed) == stats["executed"]
        # every executed node has series and plot dumps; flagged keys appear there
        for entry in executed:
            tag = f"node{entry['num']:03d}"
            series = [p for p in (tmp_path / "out" / "series").iterdir()
                      if p.name.startswith(tag)]
            plots = [p for p in (tmp_path / "out" / "plots").iterdir()
                     if p.name.startswith(tag)]
            assert len(series) == 1 and len(plots) == 1
            plot_text = plots[0].read_text()
            for outlier in entry["outliers"]:
                row_prefix = ",".join(outlier["key"])
                assert row_prefix in plot_text
                flagged = [line for line in plot_text.splitlines()
                           if line.startswith(row_prefix + ",")]
                assert flagged and all(line.endswith(",1") for line in flagged)

    def test_pruning_toggle_matches_on_common_nodes(self, workspace):
        tmp_path, path, _ = workspace
        pruned = run(load_config(path, out_dir=str(tmp_path / "p")))
        full = run(load_config(path, no_prune=True, out_dir=str(tmp_path / "f")))
        pr = {n.num: n for n in pruned.report.node_list()}
        fr = {n.num: n for n in full.report.node_list()}
        for num, node in pr.items():
            if node.status == "executed":
                assert node.outliers == fr[num].outliers
        assert pruned.report.stats.executed <= full.report.stats.executed

    def test_byte_identical_reruns(self, workspace):
        tmp_path, path, _ = workspace
        a = run(load_config(path, out_dir=str(tmp_path / "a")))
        b = run(load_config(path, out_dir=str(tmp_path / "b")))
        assert a.report_path.read_bytes() == b.report_path.read_bytes()
        for sub in ("series", "plots"):
            files_a = sorted((tmp_path / "a" / sub).iterdir())
            files_b = sorted((tmp_path / "b" / sub).iterdir())
            assert [f.name for f in files_a] == [f.name for f in files_b]
            for fa, fb in zip(files_a, files_b):
                assert fa.read_bytes() == fb.read_bytes()

    def test_empty_dataset_aborts_with_no_data(self, workspace):
        tmp_path, path, raw = workspace
        (tmp_path / "data.csv").write_text(
            ",".join(FEATURES + ["Year"]) + "\n")
        with pytest.raises(Exception, match=r"\[ingest\].*no-data"):
            run(load_config(path))
        assert not (tmp_path / "out" / "report.json").exists()

    def test_report_dict_counts(self, workspace):
        _, path, _ = workspace
        outputs = run(load_config(path))
        payload = report_dict(load_config(path), outputs.report)
        assert payload["metadata"]["config_hash"] == load_config(path).config_hash
        assert len(payload["nodes"]) == 2 ** 4 - 1

    def test_drop_log_written(self, workspace, tmp_path):
        ws, path, raw = workspace
        data = ws / "data.csv"
        lines = data.read_text().splitlines()
        lines.insert(3, ",".join([""] * 4 + ["2010"]))  # missing features
        data.write_text("\n".join(lines) + "\n")
        run(load_config(path))
        drop_log = ws / "out" / "drops.log"
        assert drop_log.exists()
        assert "missing value" in drop_log.read_text()


class TestEmitComparison:
    def test_identical_sets_jaccard_one(self, tmp_path):
        path = tmp_path / "cmp.csv"
        jaccard = emit_comparison(path, {"a", "b", "c"},
                                  {"scan": ["a", "b"], "deep": ["b", "a"]})
        assert jaccard["scan_vs_deep"] == 1.0
        lines = path.read_text().splitlines()
        assert lines[0] == "scan,deep"
        assert lines[1] == "a,a" and lines[2] == "b,b"

    def test_disjoint_sets_jaccard_zero(self, tmp_path):
        jaccard = emit_comparison(tmp_path / "cmp.csv", {"a", "b"},
                                  {"scan": ["a"], "other": ["b"]})
        assert jaccard["scan_vs_other"] == 0.0

    def test_planted_keys_listed_under_every_method(self, tmp_path):
        planted = ["wild-1", "wild-2"]
        path = tmp_path / "cmp.csv"
        emit_comparison(path, {"wild-1", "wild-2", "tame"},
                        {"scan": planted, "iforest": planted,
                         "bagging": planted})
        text = path.read_text()
        for label in planted:
            assert text.count(label) == 3

    def test_mismatched_universe_rejected(self, tmp_path):
        with pytest.raises(DataError, match="universe"):
            emit_comparison(tmp_path / "cmp.csv", {"a"},
                            {"scan": ["a"], "other": ["zzz"]})

    def test_empty_columns_jaccard_undefined(self, tmp_path):
        jaccard = emit_comparison(tmp_path / "cmp.csv", {"a"},
                                  {"scan": [], "other": []})
        assert jaccard["scan_vs_other"] is None


class TestIngestHelper:
    def test_baseline_year_must_appear(self, workspace):
        tmp_path, path, raw = workspace
        raw["schema"]["baseline_year"] = 2016  # absent from the fixture data
        raw["scan"]["years"] = [2016, 2017]
        path.write_text(json.dumps(raw))
        config = load_config(path)
        with pytest.raises(DataError, match="2016"):
            ingest(config)
