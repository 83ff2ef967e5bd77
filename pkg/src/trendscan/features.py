"""Rank categorical features against a target measure.

The target measure is discretized into quantile bins, then each candidate
feature is scored with the Pearson chi-squared statistic and the plug-in
mutual information (natural log) of its contingency table with the bins.
"""

from __future__ import annotations

import math
import warnings
from collections import Counter
from dataclasses import dataclass

import numpy as np

from trendscan.ingest import CleanRecord


@dataclass(frozen=True)
class FeatureScore:
    feature: str
    chi2: float
    mutual_info: float  # nats
    rank: int


def discretize_target(records: list[CleanRecord], measure_name: str,
                      n_bins: int) -> list[int]:
    """Quantile-bin a measure; returns one bin label per record, in order.

    Bins are formed by sorting on (value, record order) and cutting into
    n_bins contiguous chunks of size floor(n/n_bins) or ceil(n/n_bins).
    With fewer distinct values than bins, falls back to one bin per
    distinct value and warns.
    """
    if n_bins < 2:
        raise ValueError("n_bins must be >= 2")
    values = [rec.measures[measure_name] for rec in records]
    if not values:
        raise ValueError("no records to discretize")
    distinct = sorted(set(values))
    if len(distinct) < n_bins:
        warnings.warn(f"only {len(distinct)} distinct values for "
                      f"{measure_name!r}; collapsing to value bins")
        index = {v: i for i, v in enumerate(distinct)}
        return [index[v] for v in values]
    n = len(values)
    order = sorted(range(n), key=lambda i: (values[i], i))
    base, rem = divmod(n, n_bins)
    labels = [0] * n
    pos = 0
    for b in range(n_bins):
        size = base + (1 if b < rem else 0)
        for i in order[pos:pos + size]:
            labels[i] = b
        pos += size
    return labels


def _contingency(xs, ys) -> np.ndarray:
    if len(xs) != len(ys):
        raise ValueError("label sequences must have equal length")
    if not xs:
        raise ValueError("empty input")
    x_index = {v: i for i, v in enumerate(sorted(set(xs), key=str))}
    y_index = {v: i for i, v in enumerate(sorted(set(ys), key=str))}
    table = np.zeros((len(x_index), len(y_index)))
    for pair, count in Counter(zip(xs, ys)).items():
        table[x_index[pair[0]], y_index[pair[1]]] = count
    return table


def chi_squared_score(feature_labels, target_bins) -> float:
    """Pearson chi-squared statistic of the observed contingency table."""
    table = _contingency(feature_labels, target_bins)
    n = table.sum()
    expected = np.outer(table.sum(axis=1), table.sum(axis=0)) / n
    mask = expected > 0
    return float((((table - expected) ** 2)[mask] / expected[mask]).sum())


def mutual_information_score(feature_labels, target_bins) -> float:
    """Plug-in mutual information estimate in nats over observed cells."""
    table = _contingency(feature_labels, target_bins)
    n = table.sum()
    px = table.sum(axis=1) / n
    py = table.sum(axis=0) / n
    mi = 0.0
    for i in range(table.shape[0]):
        for j in range(table.shape[1]):
            if table[i, j] > 0:
                pxy = table[i, j] / n
                mi += pxy * math.log(pxy / (px[i] * py[j]))
    return float(mi)


def entropy(labels) -> float:
    """Plug-in entropy in nats, for score sanity checks."""
    if not labels:
        raise ValueError("empty input")
    n = len(labels)
    return -sum((c / n) * math.log(c / n) for c in Counter(labels).values())


def rank_features(records: list[CleanRecord], candidates: list[str],
                  measure_name: str, n_bins: int = 4) -> list[FeatureScore]:
    """Score every candidate feature and rank by MI, then chi2, then name."""
    if not candidates:
        raise ValueError("no candidate features")
    bins = discretize_target(records, measure_name, n_bins)
    scored = []
    for feature in candidates:
        labels = [rec.features[feature] for rec in records]
        scored.append((feature,
                       chi_squared_score(labels, bins),
                       mutual_information_score(labels, bins)))
    scored.sort(key=lambda t: (-t[2], -t[1], t[0]))
    return [FeatureScore(feature=f, chi2=c, mutual_info=m, rank=i + 1)
            for i, (f, c, m) in enumerate(scored)]
