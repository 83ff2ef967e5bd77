"""Distance/accumulation kernels with a compiled fast path.

The numpy implementations below are the reference. If the compiled
extension (trendscan._speedups) is importable, it replaces them at import
time; set TRENDSCAN_NO_EXT=1 to force the numpy fallback. Both backends
accumulate in the same order (features, then points), so results are
bit-identical either way.
"""

import os

import numpy as np


def _np_pairwise_sqdist(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Squared Euclidean distance matrix between rows of x and rows of c."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    c = np.ascontiguousarray(c, dtype=np.float64)
    out = np.zeros((x.shape[0], c.shape[0]))
    # feature-major accumulation keeps the summation order fixed
    for j in range(x.shape[1]):
        diff = x[:, j, None] - c[None, :, j]
        out += diff * diff
    return out


def _np_assign(x: np.ndarray, c: np.ndarray):
    """Nearest-centroid labels (ties to lowest index) and min squared distances."""
    d2 = _np_pairwise_sqdist(x, c)
    labels = np.argmin(d2, axis=1).astype(np.int64)
    mind = d2[np.arange(d2.shape[0]), labels]
    return labels, mind


def _np_accumulate(x: np.ndarray, labels: np.ndarray, k: int):
    """Per-label vector sums and counts, accumulated in point order."""
    x = np.asarray(x, dtype=np.float64)
    sums = np.zeros((k, x.shape[1]))
    counts = np.zeros(k, dtype=np.int64)
    np.add.at(sums, labels, x)
    np.add.at(counts, labels, 1)
    return sums, counts


_ext = None
if not os.environ.get("TRENDSCAN_NO_EXT"):
    try:
        from trendscan import _speedups as _ext
    except ImportError:
        _ext = None

if _ext is not None:
    BACKEND = "compiled"

    def pairwise_sqdist(x, c):
        return _ext.pairwise_sqdist(
            np.ascontiguousarray(x, dtype=np.float64),
            np.ascontiguousarray(c, dtype=np.float64))

    def assign(x, c):
        return _ext.assign(
            np.ascontiguousarray(x, dtype=np.float64),
            np.ascontiguousarray(c, dtype=np.float64))

    def accumulate(x, labels, k):
        return _ext.accumulate(
            np.ascontiguousarray(x, dtype=np.float64),
            np.ascontiguousarray(labels, dtype=np.int64), k)
else:
    BACKEND = "numpy"
    pairwise_sqdist = _np_pairwise_sqdist
    assign = _np_assign
    accumulate = _np_accumulate
