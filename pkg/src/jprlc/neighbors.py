"""Per-cloud k-nearest-neighbor graphs.

The neighbor relation feeds the consistency penalty: each directed edge
(i -> b) says the posterior of point b should resemble the posterior of
point i. Neighbor search is exact, with ties broken by the lower point
index so graph construction is fully deterministic. Because rigid motions
preserve distances, the graph is built once on the input coordinates and
is never rebuilt while poses change.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .validation import check_cloud, check_cloud_set

_ROW_BLOCK = 256


def knn_indices(points, k: int) -> np.ndarray:
    """Indices of the k nearest points for every point of one cloud.

    Returns an (n, min(k, n - 1)) int array. Row i holds the neighbors of
    point i ordered by increasing Euclidean distance, excluding i itself;
    equal distances are ordered by point index.
    """
    pts = check_cloud(points)
    n = pts.shape[0]
    if k < 1:
        raise ConfigurationError(f"k must be >= 1, got {k}")
    if n < 2:
        raise ConfigurationError("k-NN needs a cloud with at least 2 points")
    kk = min(k, n - 1)
    out = np.empty((n, kk), dtype=np.int64)
    for start in range(0, n, _ROW_BLOCK):
        stop = min(start + _ROW_BLOCK, n)
        diff = pts[start:stop, None, :] - pts[None, :, :]
        dist_sq = (diff**2).sum(axis=-1)
        dist_sq[np.arange(stop - start), np.arange(start, stop)] = np.inf
        # stable sort keeps index order among equal distances
        order = np.argsort(dist_sq, axis=1, kind="stable")
        out[start:stop] = order[:, :kk]
    return out


@dataclass(frozen=True)
class NeighborGraph:
    """Directed k-NN adjacency for every cloud of a set."""

    neighbors: tuple[np.ndarray, ...]
    k: int

    @classmethod
    def build(cls, clouds, k: int) -> "NeighborGraph":
        checked = check_cloud_set(clouds, min_clouds=1)
        tables = []
        for pts in checked:
            table = knn_indices(pts, k)
            table.setflags(write=False)
            tables.append(table)
        return cls(neighbors=tuple(tables), k=k)

    def edges(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """Directed edges (src, dst) of cloud j as flat index arrays."""
        table = self.neighbors[j]
        n, kk = table.shape
        src = np.repeat(np.arange(n), kk)
        return src, table.ravel()
