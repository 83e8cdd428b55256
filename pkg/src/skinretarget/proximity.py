"""
Exact nearest-neighbour search and normal-based signed depth.

Both the tree index and the brute-force scan rank candidates by the same
squared-distance expression and break ties toward the lowest index, so the
two always agree bit for bit.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .exceptions import IndexBuildError
from .validation import check_array

_CANDIDATES = 4
_TIE_RTOL = 1e-9
_CHUNK_ELEMS = 2_000_000


def squared_distances(q, p):
    # fixed evaluation order shared by every code path
    d = q - p
    return d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1] + d[..., 2] * d[..., 2]


def brute_force_nearest(points, queries):
    """O(N·M) scan; returns nearest indices (lowest on ties) and squared distances."""
    points = np.asarray(points, dtype=np.float64)
    queries = np.asarray(queries, dtype=np.float64)
    idx = np.empty(len(queries), dtype=np.int64)
    d2 = np.empty(len(queries))
    step = max(1, _CHUNK_ELEMS // max(1, len(points)))
    for s in range(0, len(queries), step):
        block = squared_distances(queries[s : s + step, None, :], points[None, :, :])
        i = np.argmin(block, axis=1)
        idx[s : s + step] = i
        d2[s : s + step] = block[np.arange(len(i)), i]
    return idx, d2


class ProximityIndex:
    """k-d tree over reference points, with their unit normals."""

    def __init__(self, points, normals=None, workers=1):
        points = check_array(points, "points", (None, 3))
        if len(points) == 0:
            raise IndexBuildError("cannot index an empty point set")
        if normals is not None:
            normals = check_array(normals, "normals", (len(points), 3))
        self.points = points
        self.normals = normals
        self.workers = workers
        self._tree = cKDTree(points)

    def __len__(self):
        return len(self.points)

    def nearest(self, queries):
        """Nearest reference index and squared distance for each query."""
        queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        n = len(self.points)
        k = min(_CANDIDATES, n)
        _, cand = self._tree.query(queries, k=k, workers=self.workers)
        cand = cand.reshape(len(queries), k)
        d2 = squared_distances(queries[:, None, :], self.points[cand])
        best = d2.min(axis=1)
        # lowest index among exact ties of the canonical distance
        tied = d2 == best[:, None]
        idx = np.where(tied, cand, n).min(axis=1)
        if k < n:
            # every unseen point could still tie if the k-th candidate is this close
            ambiguous = np.flatnonzero(d2.max(axis=1) <= best * (1.0 + _TIE_RTOL) + 1e-300)
            if ambiguous.size:
                bi, bd = brute_force_nearest(self.points, queries[ambiguous])
                idx[ambiguous] = bi
                best[ambiguous] = bd
        return idx, best


@dataclass
class SignedDepthResult:
    """Nearest reference index, offset ``query - nearest`` and signed depth."""

    index: np.ndarray
    offset: np.ndarray
    depth: np.ndarray


def build_index(points, normals, workers=1):
    points = check_array(points, "points", (None, 3))
    normals = check_array(normals, "normals", (len(points), 3))
    if len(points) and not np.allclose(np.linalg.norm(normals, axis=1), 1.0, atol=1e-6):
        raise IndexBuildError("normals must be unit length")
    return ProximityIndex(points, normals, workers=workers)


def depth_from(offset, normal):
    """Signed depth for outward normals: positive when the query is inside."""
    return -(offset[..., 0] * normal[..., 0] + offset[..., 1] * normal[..., 1] + offset[..., 2] * normal[..., 2])


def signed_depth(index, queries):
    """
    Signed depth of each query against the indexed surface samples.

    The offset to the nearest sample is projected on that sample's outward
    normal and negated, so points inside the surface get positive depth.
    """
    queries = np.asarray(queries, dtype=np.float64)
    single = queries.ndim == 1
    q = queries.reshape(-1, 3)
    idx, _ = index.nearest(q)
    offset = q - index.points[idx]
    depth = depth_from(offset, index.normals[idx])
    if single:
        return SignedDepthResult(int(idx[0]), offset[0], float(depth[0]))
    return SignedDepthResult(idx, offset, depth)


def chamfer_distance(set_a, set_b):
    """Symmetric mean of squared nearest-neighbour distances."""
    a = check_array(set_a, "set_a", (None, 3))
    b = check_array(set_b, "set_b", (None, 3))
    if len(a) == 0 or len(b) == 0:
        raise IndexBuildError("chamfer distance needs two nonempty sets")
    _, ab = ProximityIndex(b).nearest(a)
    _, ba = ProximityIndex(a).nearest(b)
    return 0.5 * (float(ab.mean()) + float(ba.mean()))
