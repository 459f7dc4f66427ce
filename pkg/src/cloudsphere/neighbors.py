"""Exact nearest-neighbor queries with lowest-index tie breaking."""

import os

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

# Below this size a dense distance matrix is cheaper than building a tree.
BRUTE_FORCE_LIMIT = 512


def worker_count():
    """Thread cap for tree queries, taken from CLOUDSPHERE_THREADS (default: all cores)."""
    raw = os.environ.get("CLOUDSPHERE_THREADS")
    if not raw:
        return -1
    try:
        value = int(raw)
    except ValueError:
        return -1
    return value if value > 0 else -1


def _brute_nearest(queries, points):
    d2 = cdist(queries, points, "sqeuclidean")
    # argmin returns the first minimum, i.e. the lowest index on ties
    idx = np.argmin(d2, axis=1)
    return idx


class NearestIndex:
    """Nearest-neighbor lookup into a fixed point set.

    The tree (or dense fallback) is built once, so a fixed supervision cloud
    can be queried every iteration without rebuilding.
    """

    def __init__(self, points):
        self.points = np.ascontiguousarray(points, dtype=np.float64)
        self._tree = None
        if len(self.points) >= BRUTE_FORCE_LIMIT:
            self._tree = cKDTree(self.points)

    def __len__(self):
        return len(self.points)

    def query(self, queries):
        """Return (indices, squared distances) of the nearest point for every query.

        Squared distances are recomputed from coordinate differences so they
        do not depend on which search path produced the index.
        """
        queries = np.ascontiguousarray(queries, dtype=np.float64)
        if self._tree is None or len(queries) < BRUTE_FORCE_LIMIT and len(self.points) < 4 * BRUTE_FORCE_LIMIT:
            idx = _brute_nearest(queries, self.points)
        else:
            k = min(2, len(self.points))
            dist, nbr = self._tree.query(queries, k=k, workers=worker_count())
            if k == 1:
                idx = nbr
            else:
                idx = nbr[:, 0].copy()
                tied = dist[:, 1] == dist[:, 0]
                idx[tied] = np.minimum(nbr[tied, 0], nbr[tied, 1])
        diff = queries - self.points[idx]
        d2 = np.einsum("ij,ij->i", diff, diff)
        return idx, d2


def nearest(queries, points):
    """One-shot nearest-neighbor query of ``queries`` into ``points``."""
    return NearestIndex(points).query(queries)
