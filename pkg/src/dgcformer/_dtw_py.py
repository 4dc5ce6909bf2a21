"""Pure-Python DTW kernels; used when the compiled core is unavailable."""

import math

import numpy as np


def dtw_distance(x, y, radius=-1):
    """Banded DTW with squared point cost; returns sqrt of the optimal path cost.

    ``radius < 0`` disables the Sakoe-Chiba band. The band is widened to
    ``|len(x) - len(y)|`` so the end cell is always reachable.
    """
    x = np.ascontiguousarray(x, dtype=np.float64).tolist()
    y = np.ascontiguousarray(y, dtype=np.float64).tolist()
    n, m = len(x), len(y)
    if n == 0 or m == 0:
        raise ValueError("DTW needs non-empty sequences")
    r = max(n, m) if radius < 0 else max(radius, abs(n - m))
    inf = math.inf
    prev = [inf] * (m + 1)
    prev[0] = 0.0
    for i in range(1, n + 1):
        cur = [inf] * (m + 1)
        xi = x[i - 1]
        lo = max(1, i - r)
        hi = min(m, i + r)
        for j in range(lo, hi + 1):
            d = xi - y[j - 1]
            best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
            if cur[j - 1] < best:
                best = cur[j - 1]
            cur[j] = d * d + best
        prev = cur
    return math.sqrt(prev[m])


def pairwise_dtw(series, radius=-1):
    """Symmetric DTW distance matrix between the rows of ``series`` (K, T)."""
    series = np.ascontiguousarray(series, dtype=np.float64)
    k = series.shape[0]
    out = np.zeros((k, k), dtype=np.float64)
    for a in range(k):
        for b in range(a + 1, k):
            out[a, b] = out[b, a] = dtw_distance(series[a], series[b], radius)
    return out
