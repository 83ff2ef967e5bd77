"""Outlier discovery over feature-subset aggregations of temporal tables.

Pipeline: ingest delimited data, select features, aggregate each feature
subset per year, scale to percent change against a baseline year, then
peel outliers off with iterative k-means at every node of the subset
lattice, pruning descendants of outlier-free nodes. Isolation-forest and
LOF-feature-bagging detectors cross-check the results.
"""

__version__ = "0.1.0"
