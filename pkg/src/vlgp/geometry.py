"""Location orderings and nearest-neighbour queries.

Orderings and neighbour sets are the combinatorial backbone of the sparse
approximation: every conditioning rule downstream is phrased in terms of
"nearest m previous" or "nearest m overall" under a fixed ordering of the
locations. All queries here are deterministic: distance ties are broken by
the lowest index, so results agree exactly with a brute-force scan.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .validation import check_coords, check_permutation

__all__ = [
    "Ordering",
    "coordinate_order",
    "maxmin_order",
    "nearest_m_previous",
    "nearest_m_any",
]

# brute force below this size; KD-tree plus exact tie refinement above
_BRUTE_FORCE_MAX = 2048


@dataclass(frozen=True)
class Ordering:
    """A permutation of 0..n-1; ``perm[k]`` is the original index of the
    k-th ordered point."""

    perm: np.ndarray
    kind: str

    def __post_init__(self):
        object.__setattr__(self, "perm", check_permutation(self.perm, len(self.perm)))

    @property
    def n(self):
        return self.perm.shape[0]


def coordinate_order(coords):
    """Left-to-right ordering for one-dimensional locations.

    Ties in the coordinate are broken by the original index. Only defined
    for d = 1.
    """
    X = check_coords(coords)
    if X.shape[1] != 1:
        raise ValueError("coordinate ordering requires 1-D locations")
    perm = np.argsort(X[:, 0], kind="stable")
    return Ordering(perm=perm.astype(np.int64), kind="coordinate")


def maxmin_order(coords):
    """Greedy max-min ordering.

    The first point is the one nearest the coordinate centroid; each
    subsequent point maximizes its minimum distance to all previously
    ordered points. Exact O(n^2) greedy selection, ties to the lowest
    index.
    """
    X = check_coords(coords)
    n = X.shape[0]
    centroid = X.mean(axis=0)
    d0 = np.linalg.norm(X - centroid, axis=1)
    first = int(np.argmin(d0))

    perm = np.empty(n, dtype=np.int64)
    perm[0] = first
    mindist = np.linalg.norm(X - X[first], axis=1)
    mindist[first] = -np.inf
    for k in range(1, n):
        nxt = int(np.argmax(mindist))
        perm[k] = nxt
        np.minimum(mindist, np.linalg.norm(X - X[nxt], axis=1), out=mindist)
        mindist[nxt] = -np.inf
    return Ordering(perm=perm, kind="maxmin")


def _nearest_from_candidates(X, target, candidates, m):
    """m nearest candidate indices to X[target], ties to lowest index."""
    cand = np.asarray(candidates, dtype=np.int64)
    if cand.size == 0 or m <= 0:
        return np.empty(0, dtype=np.int64)
    dist = np.linalg.norm(X[cand] - X[target], axis=1)
    order = np.lexsort((cand, dist))
    return cand[order[: min(m, cand.size)]]


def nearest_m_previous(coords, ordering, i, m):
    """Ordered positions of the up-to-m nearest points before position ``i``.

    ``i`` refers to a position in the ordering; the result lists ordered
    positions j < i sorted by distance to point i, ties to the lowest
    position. Agrees with a full linear scan.
    """
    X = check_coords(coords)
    perm = ordering.perm if isinstance(ordering, Ordering) else check_permutation(ordering, X.shape[0])
    if not (0 <= i < X.shape[0]):
        raise ValueError(f"ordered index {i} out of range")
    Xo = X[perm]
    return _nearest_from_candidates(Xo, i, np.arange(i), m)


def nearest_m_previous_all(ordered_coords, m):
    """``nearest_m_previous`` for every position at once.

    Input coordinates must already be in ordering sequence. Returns a list
    of n index arrays (row i has length min(m, i)).
    """
    X = np.asarray(ordered_coords, dtype=np.float64)
    n = X.shape[0]
    out = [np.empty(0, dtype=np.int64)]
    block = 512
    for start in range(1, n, block):
        stop = min(start + block, n)
        dist = np.linalg.norm(X[start:stop, None, :] - X[None, :stop, :], axis=-1)
        for i in range(start, stop):
            row = dist[i - start, :i]
            if i <= m:
                idx = np.lexsort((np.arange(i), row))
            else:
                part = np.argpartition(row, m - 1)[:m]
                # argpartition gives an unsorted, tie-arbitrary head; widen to
                # every candidate at the cutoff distance before final sort
                cutoff = row[part].max()
                cand = np.flatnonzero(row <= cutoff)
                idx = cand[np.lexsort((cand, row[cand]))][:m]
            out.append(idx.astype(np.int64))
    return out


def nearest_m_any(coords, i, m):
    """The m nearest points to point ``i`` including ``i`` itself.

    ``coords`` is taken in whatever order it is given (callers pass
    already-ordered coordinates). Ties break to the lowest index.
    """
    X = check_coords(coords)
    n = X.shape[0]
    if m < 1:
        raise ValueError("m must be >= 1")
    if m > n:
        raise ValueError(f"m = {m} exceeds the number of locations {n}")
    if n <= _BRUTE_FORCE_MAX:
        return _nearest_from_candidates(X, i, np.arange(n), m)
    tree = cKDTree(X)
    dist, _ = tree.query(X[i], k=m)
    r = float(np.atleast_1d(dist)[-1]) * (1 + 1e-12)
    ball = tree.query_ball_point(X[i], r)
    return _nearest_from_candidates(X, i, ball, m)


def nearest_m_any_all(coords, m):
    """``nearest_m_any`` for every point; returns an (n, m) index array
    with rows sorted by distance, ties to the lowest index."""
    X = check_coords(coords)
    n = X.shape[0]
    if m < 1:
        raise ValueError("m must be >= 1")
    if m > n:
        raise ValueError(f"m = {m} exceeds the number of locations {n}")
    if n <= _BRUTE_FORCE_MAX:
        dist = np.linalg.norm(X[:, None, :] - X[None, :, :], axis=-1)
        idx = np.lexsort((np.broadcast_to(np.arange(n), (n, n)), dist), axis=1)
        return idx[:, :m].astype(np.int64)

    tree = cKDTree(X)
    k = min(n, m + 1)
    dist, idx = tree.query(X, k=k)
    out = np.empty((n, m), dtype=np.int64)
    for i in range(n):
        row_d, row_i = dist[i], idx[i].astype(np.int64)
        # refine through a ball query whenever a distance tie could cross
        # the m-th position (common on gridded locations)
        boundary_tie = k > m and row_d[m] <= row_d[m - 1] * (1 + 1e-12)
        if boundary_tie:
            r = row_d[m - 1] * (1 + 1e-12)
            cand = np.asarray(tree.query_ball_point(X[i], r), dtype=np.int64)
            out[i] = _nearest_from_candidates(X, i, cand, m)
        else:
            order = np.lexsort((row_i[:m], row_d[:m]))
            out[i] = row_i[:m][order]
    return out
