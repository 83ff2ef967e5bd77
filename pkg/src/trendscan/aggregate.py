"""Split-apply-combine over feature subsets, with baseline-year scaling.

Records are grouped by a subset of the selected features, aggregated per
year (row count, or mean of a measure), and each group's year series is
converted to percent change against the baseline year. Groups whose
baseline is zero or missing cannot be scaled and are rejected with a
reason rather than imputed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal

import numpy as np

from trendscan.errors import ConfigError
from trendscan.ingest import CleanRecord

Key = tuple[str, ...]


@dataclass(frozen=True)
class FeatureSubset:
    """Non-empty subset of the selected features, encoded as a bitmask.

    Bit i corresponds to features[i]; members therefore keep the declared
    feature order.
    """

    num: int
    features: tuple[str, ...]

    def __post_init__(self):
        n = len(self.features)
        if not 1 <= self.num <= (1 << n) - 1:
            raise ValueError(f"subset bitmask {self.num} out of range for {n} features")

    @property
    def members(self) -> tuple[str, ...]:
        return tuple(f for i, f in enumerate(self.features) if self.num >> i & 1)

    @property
    def level(self) -> int:
        return self.num.bit_count()


@dataclass(frozen=True)
class Measure:
    kind: str  # "count" | "mean"
    field: str | None = None

    def __post_init__(self):
        if self.kind not in ("count", "mean"):
            raise ConfigError(f"measure kind must be count|mean, got {self.kind!r}")
        if self.kind == "mean" and not self.field:
            raise ConfigError("mean measure requires a field name")


@dataclass(frozen=True)
class Rejection:
    """Why a group could not be scaled to percent change."""

    reason: str  # zero-baseline | negative-baseline | missing-baseline | incomplete-series


@dataclass
class SeriesVector:
    """One group's per-year aggregates and percent-change vector."""

    key: Key
    raw: dict[int, Decimal | int]
    pct: np.ndarray  # aligned with the configured year list
    support: int


@dataclass
class SeriesSet:
    series: list[SeriesVector]
    rejections: list[tuple[Key, str]] = field(default_factory=list)

    @property
    def group_count(self) -> int:
        """Distinct keys before rejection filtering (the gating quantity)."""
        return len(self.series) + len(self.rejections)


def split_apply_combine(records: list[CleanRecord], subset: FeatureSubset,
                        measure: Measure, years: list[int]):
    """Group records by the subset's members and aggregate per year.

    Returns {key: (raw, support)} where raw maps year -> aggregate. Counts
    fill absent years with 0; means leave them as None. Records with years
    outside the configured list are ignored.
    """
    if not years:
        raise ValueError("years must be non-empty")
    members = subset.members
    year_set = set(years)
    if measure.kind == "count":
        counts: dict[Key, dict[int, int]] = {}
        for rec in records:
            if rec.year not in year_set:
                continue
            key = tuple(rec.features[m] for m in members)
            per_year = counts.get(key)
            if per_year is None:
                per_year = counts[key] = dict.fromkeys(years, 0)
            per_year[rec.year] += 1
        return {key: (per_year, sum(per_year.values()))
                for key, per_year in counts.items()}
    if measure.field is None:
        raise ConfigError("mean measure requires a field name")
    sums: dict[Key, dict[int, list]] = {}
    for rec in records:
        if rec.year not in year_set:
            continue
        if measure.field not in rec.measures:
            raise ConfigError(f"measure column {measure.field!r} missing from records")
        key = tuple(rec.features[m] for m in members)
        per_year = sums.get(key)
        if per_year is None:
            per_year = sums[key] = {y: [Decimal(0), 0] for y in years}
        cell = per_year[rec.year]
        cell[0] += rec.measures[measure.field]
        cell[1] += 1
    out = {}
    for key, per_year in sums.items():
        raw = {y: (total / n if n else None) for y, (total, n) in per_year.items()}
        out[key] = (raw, sum(n for _, n in per_year.values()))
    return out


def to_percent_change(raw: dict[int, Decimal | int | None], baseline_year: int,
                      years: list[int]):
    """Scale a year series to percent change vs the baseline year.

    Returns a float vector aligned with `years`, or a Rejection when the
    baseline is missing/zero or (for mean measures) any year is undefined.
    """
    if baseline_year not in years:
        raise ValueError(f"baseline year {baseline_year} not in configured years")
    base = raw.get(baseline_year)
    if base is None:
        return Rejection("missing-baseline")
    if base == 0:
        return Rejection("zero-baseline")
    if base < 0:  # percent change has no principled meaning from below zero
        return Rejection("negative-baseline")
    if any(raw.get(y) is None for y in years):
        return Rejection("incomplete-series")
    b = float(base)
    return np.array([100.0 * (float(raw[y]) - b) / b for y in years])


def build_series(records: list[CleanRecord], subset: FeatureSubset,
                 measure: Measure, years: list[int],
                 baseline_year: int) -> SeriesSet:
    """Aggregate then scale; output sorted by key, rejections kept separate."""
    grouped = split_apply_combine(records, subset, measure, years)
    series: list[SeriesVector] = []
    rejections: list[tuple[Key, str]] = []
    for key in sorted(grouped):
        raw, support = grouped[key]
        pct = to_percent_change(raw, baseline_year, years)
        if isinstance(pct, Rejection):
            rejections.append((key, pct.reason))
        else:
            series.append(SeriesVector(key=key, raw=raw, pct=pct, support=support))
    return SeriesSet(series=series, rejections=rejections)


class AtomCube:
    """Finest-grain aggregate over all selected features.

    Aggregation by any feature subset factors through the full-subset
    aggregation (sums and counts are associative), so a lattice scan can
    aggregate the records once and derive every node from the atoms.
    project() is exactly equivalent to build_series on the same records.
    """

    def __init__(self, features: tuple[str, ...], measure: Measure,
                 years: list[int], baseline_year: int,
                 atoms: dict[Key, list]):
        self.features = features
        self.measure = measure
        self.years = years
        self.baseline_year = baseline_year
        self._atoms = atoms  # full key -> per-year [sum, count] or count list

    @classmethod
    def from_records(cls, records: list[CleanRecord], features: tuple[str, ...],
                     measure: Measure, years: list[int],
                     baseline_year: int) -> "AtomCube":
        year_pos = {y: i for i, y in enumerate(years)}
        atoms: dict[Key, list] = {}
        if measure.kind == "count":
            for rec in records:
                pos = year_pos.get(rec.year)
                if pos is None:
                    continue
                key = tuple(rec.features[f] for f in features)
                cell = atoms.get(key)
                if cell is None:
                    cell = atoms[key] = [0] * len(years)
                cell[pos] += 1
        else:
            for rec in records:
                pos = year_pos.get(rec.year)
                if pos is None:
                    continue
                if measure.field not in rec.measures:
                    raise ConfigError(
                        f"measure column {measure.field!r} missing from records")
                key = tuple(rec.features[f] for f in features)
                cell = atoms.get(key)
                if cell is None:
                    cell = atoms[key] = [[Decimal(0), 0] for _ in years]
                cell[pos][0] += rec.measures[measure.field]
                cell[pos][1] += 1
        return cls(features, measure, years, baseline_year, atoms)

    def project(self, subset: FeatureSubset) -> SeriesSet:
        """Marginalize the atoms onto a subset; same result as build_series."""
        idx = [i for i in range(len(self.features)) if subset.num >> i & 1]
        n_years = len(self.years)
        merged: dict[Key, list] = {}
        if self.measure.kind == "count":
            for full_key, cell in self._atoms.items():
                key = tuple(full_key[i] for i in idx)
                acc = merged.get(key)
                if acc is None:
                    merged[key] = list(cell)
                else:
                    for p in range(n_years):
                        acc[p] += cell[p]
        else:
            for full_key, cell in self._atoms.items():
                key = tuple(full_key[i] for i in idx)
                acc = merged.get(key)
                if acc is None:
                    merged[key] = [[s, c] for s, c in cell]
                else:
                    for p in range(n_years):
                        acc[p][0] += cell[p][0]
                        acc[p][1] += cell[p][1]
        series: list[SeriesVector] = []
        rejections: list[tuple[Key, str]] = []
        for key in sorted(merged):
            acc = merged[key]
            if self.measure.kind == "count":
                raw = dict(zip(self.years, acc))
                support = sum(acc)
            else:
                raw = {y: (s / c if c else None)
                       for y, (s, c) in zip(self.years, acc)}
                support = sum(c for _, c in acc)
            pct = to_percent_change(raw, self.baseline_year, self.years)
            if isinstance(pct, Rejection):
                rejections.append((key, pct.reason))
            else:
                series.append(SeriesVector(key=key, raw=raw, pct=pct,
                                           support=support))
        return SeriesSet(series=series, rejections=rejections)
