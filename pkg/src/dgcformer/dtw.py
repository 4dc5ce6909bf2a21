"""DTW distances and the DTW-based channel clustering baseline.

The kernels come from the compiled ``_dtw_core`` extension when it is built,
otherwise from the pure-Python ``_dtw_py`` module. Setting the environment
variable ``DGC_PURE_PYTHON=1`` forces the fallback.
"""

from __future__ import annotations

import os

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import squareform

from . import _dtw_py

BACKEND = "python"
_kernels = _dtw_py
if os.environ.get("DGC_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _dtw_core as _kernels  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:  # extension not built
        _kernels = _dtw_py

DEFAULT_RADIUS = 50
DEFAULT_CAP = 1000


def dtw_distance(x, y, radius: int = DEFAULT_RADIUS) -> float:
    """Square root of the minimal cumulative squared cost over warping paths.

    Steps are (1,0), (0,1), (1,1) with unit weight. ``radius=None`` or a
    negative value disables the band.
    """
    return float(_kernels.dtw_distance(x, y, -1 if radius is None else int(radius)))


def pairwise_dtw(series: np.ndarray, radius: int = DEFAULT_RADIUS) -> np.ndarray:
    return _kernels.pairwise_dtw(series, -1 if radius is None else int(radius))


def dtw_cluster(train_values: np.ndarray, n: int, *, radius: int = DEFAULT_RADIUS,
                cap: int = DEFAULT_CAP, return_distances: bool = False):
    """Average-linkage clustering of channels under DTW distance.

    ``train_values`` is (T, N); only the last ``cap`` steps are used. Labels
    are renumbered by first appearance so the output is canonical.
    """
    values = np.asarray(train_values, dtype=np.float64)
    n_channels = values.shape[1]
    if not 1 <= n <= n_channels:
        raise ValueError(f"cluster count {n} must lie in [1, {n_channels}]")
    series = np.ascontiguousarray(values[-cap:].T)
    dist = pairwise_dtw(series, radius)
    if n_channels == 1:
        labels = np.zeros(1, dtype=np.int64)
    else:
        tree = linkage(squareform(dist, checks=False), method="average")
        labels = canonical_labels(fcluster(tree, t=n, criterion="maxclust") - 1)
    return (labels, dist) if return_distances else labels


def canonical_labels(labels) -> np.ndarray:
    labels = np.asarray(labels)
    mapping: dict[int, int] = {}
    return np.array([mapping.setdefault(int(v), len(mapping)) for v in labels], dtype=np.int64)
