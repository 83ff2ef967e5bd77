"""Target discretization and chi-squared / mutual-information scoring."""

import math
from decimal import Decimal

import numpy as np
import pytest
from scipy import stats

from trendscan.features import (chi_squared_score, discretize_target, entropy,
                                mutual_information_score, rank_features)
from trendscan.ingest import CleanRecord


def measure_records(values, feature_maps=None):
    feature_maps = feature_maps or [{} for _ in values]
    return [CleanRecord(features=f, year=2012, measures={"m": Decimal(str(v))})
            for v, f in zip(values, feature_maps)]


class TestDiscretize:
    def test_uniform_quantiles(self):
        labels = discretize_target(measure_records(range(1, 101)), "m", 4)
        assert [labels.count(b) for b in range(4)] == [25, 25, 25, 25]
        assert labels[:25] == [0] * 25 and labels[-25:] == [3] * 25

    def test_all_equal_collapses(self):
        with pytest.warns(UserWarning, match="distinct"):
            labels = discretize_target(measure_records([7] * 30), "m", 4)
        assert set(labels) == {0}

    def test_lognormal_edges_match_independent_sort(self):
        rng = np.random.default_rng(12)
        values = [float(v) for v in rng.lognormal(0, 1, size=1000)]
        labels = discretize_target(measure_records(values), "m", 4)
        swept = sorted(values)
        for b in range(3):
            upper = max(values[i] for i in range(1000) if labels[i] == b)
            lower = min(values[i] for i in range(1000) if labels[i] == b + 1)
            # the bin boundary falls exactly between consecutive order stats
            assert upper == swept[250 * (b + 1) - 1]
            assert lower == swept[250 * (b + 1)]

    def test_remainder_spread(self):
        labels = discretize_target(measure_records(range(10)), "m", 3)
        assert sorted(labels.count(b) for b in range(3)) == [3, 3, 4]


class TestChiSquared:
    def test_hand_computed_2x2(self):
        xs = ["a"] * 10 + ["a"] * 20 + ["b"] * 20 + ["b"] * 10
        ys = [0] * 10 + [1] * 20 + [0] * 20 + [1] * 10
        # O=[[10,20],[20,10]], E=15 everywhere: 4 * 25/15 = 20/3
        assert chi_squared_score(xs, ys) == pytest.approx(20 / 3, abs=1e-12)

    def test_perfect_association(self):
        rng = np.random.default_rng(0)
        labels = [int(v) for v in rng.integers(0, 5, size=400)]
        # identical r=c permutation-structured table: chi2 = n * (r - 1)
        assert chi_squared_score(labels, labels) == pytest.approx(400 * 4)

    def test_independent_below_quantile(self):
        hits = 0
        for seed in range(100):
            rng = np.random.default_rng(seed)
            xs = rng.integers(0, 4, size=10000)
            ys = rng.integers(0, 3, size=10000)
            dof = (4 - 1) * (3 - 1)
            if chi_squared_score(list(xs), list(ys)) < stats.chi2.ppf(0.99, dof):
                hits += 1
        assert hits >= 95

    def test_empty_errors(self):
        with pytest.raises(ValueError):
            chi_squared_score([], [])

    def test_relabel_invariance(self):
        rng = np.random.default_rng(4)
        xs = [f"c{v}" for v in rng.integers(0, 4, size=500)]
        ys = [int(v) for v in rng.integers(0, 3, size=500)]
        relabeled = [{"c0": "zebra", "c1": "ant", "c2": "bee", "c3": "cow"}[x]
                     for x in xs]
        assert chi_squared_score(xs, ys) == pytest.approx(
            chi_squared_score(relabeled, ys), rel=1e-12)


class TestMutualInformation:
    def test_self_information_is_entropy(self):
        rng = np.random.default_rng(1)
        labels = [int(v) for v in rng.integers(0, 6, size=300)]
        assert mutual_information_score(labels, labels) == pytest.approx(
            entropy(labels), abs=1e-12)

    def test_constant_feature_zero(self):
        ys = [0, 1, 2, 0, 1, 2]
        assert mutual_information_score(["k"] * 6, ys) == pytest.approx(0, abs=1e-15)

    def test_hand_computed_counts(self):
        xs = ["a", "a", "a", "b", "b", "b"]
        ys = [0, 0, 1, 0, 1, 1]
        # joint counts [[2,1],[1,2]] over n=6
        expected = sum(c / 6 * math.log((c / 6) / (px * py))
                       for c, px, py in [(2, .5, .5), (1, .5, .5),
                                         (1, .5, .5), (2, .5, .5)])
        assert mutual_information_score(xs, ys) == pytest.approx(expected, abs=1e-12)

    def test_symmetry_and_bound(self):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            xs = [int(v) for v in rng.integers(0, 5, size=200)]
            ys = [int(v) for v in rng.integers(0, 4, size=200)]
            mi = mutual_information_score(xs, ys)
            assert mi == pytest.approx(mutual_information_score(ys, xs), abs=1e-12)
            assert mi <= min(entropy(xs), entropy(ys)) + 1e-12
            assert mi >= -1e-12

    def test_permutation_invariance(self):
        rng = np.random.default_rng(9)
        xs = [int(v) for v in rng.integers(0, 4, size=300)]
        ys = [int(v) for v in rng.integers(0, 4, size=300)]
        perm = rng.permutation(300)
        assert mutual_information_score(xs, ys) == pytest.approx(
            mutual_information_score([xs[i] for i in perm],
                                     [ys[i] for i in perm]), abs=1e-12)
        assert chi_squared_score(xs, ys) == pytest.approx(
            chi_squared_score([xs[i] for i in perm], [ys[i] for i in perm]),
            rel=1e-12)


class TestRankFeatures:
    def test_single_candidate(self):
        records = measure_records(range(20), [{"f": f"v{i % 3}"} for i in range(20)])
        scores = rank_features(records, ["f"], "m")
        assert scores[0].rank == 1 and scores[0].feature == "f"

    def test_planted_predictive_feature_first(self):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            values = [float(v) for v in rng.normal(size=240)]
            records = measure_records(values, [
                {"signal": f"s{0 if v < 0 else 1}",
                 "noise1": f"n{int(rng.integers(3))}",
                 "noise2": f"n{int(rng.integers(3))}"} for v in values])
            scores = rank_features(records, ["noise1", "signal", "noise2"], "m", 2)
            assert scores[0].feature == "signal", f"seed {seed}"

    def test_discharge_style_fixture_rankable(self):
        import gen

        records = gen.sparcs_like_records()
        candidates = ["CCS Diagnosis Description", "Age Group", "Race", "Ethnicity"]
        scores = rank_features(records, candidates, "Total Costs")
        assert sorted(s.rank for s in scores) == [1, 2, 3, 4]
        assert {s.feature for s in scores} == set(candidates)
        # cost was generated from the diagnosis, so it must rank first
        assert scores[0].feature == "CCS Diagnosis Description"

    def test_rank_ties_broken_by_name(self):
        records = measure_records(range(8), [{"b": "x", "a": "x"}] * 8)
        scores = rank_features(records, ["b", "a"], "m", 2)
        assert [s.feature for s in scores] == ["a", "b"]
