"""Input validation helpers shared across the package."""

import numpy as np


def check_coords(X, *, allow_empty=False):
    """Validate a coordinate array and return it as a C-contiguous float64
    array of shape (n, d).

    1-D input is treated as n points on the line. Rejects non-finite values
    and exactly duplicated locations (conditioning covariances would be
    singular).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise ValueError(f"coordinates must be a 2-D array, got shape {X.shape}")
    n, d = X.shape
    if d < 1:
        raise ValueError("coordinate dimension must be >= 1")
    if n == 0:
        if allow_empty:
            return np.ascontiguousarray(X)
        raise ValueError("need at least one location")
    if not np.all(np.isfinite(X)):
        raise ValueError("coordinates must be finite")
    _reject_duplicates(X)
    return np.ascontiguousarray(X)


def _reject_duplicates(X):
    # lexsort-adjacent comparison: O(n log n), catches exact duplicates only
    order = np.lexsort(X.T[::-1])
    same = np.all(X[order[1:]] == X[order[:-1]], axis=1)
    if np.any(same):
        k = int(np.argmax(same))
        i, j = sorted((int(order[k]), int(order[k + 1])))
        raise ValueError(f"duplicate locations at indices {i} and {j}")


def check_vector(v, n, name="vector"):
    """Validate a length-n finite float vector."""
    v = np.asarray(v, dtype=np.float64).ravel()
    if v.shape[0] != n:
        raise ValueError(f"{name} has length {v.shape[0]}, expected {n}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be finite")
    return v


def check_positive(value, name):
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a finite positive number, got {value}")
    return value


def check_permutation(perm, n):
    perm = np.asarray(perm, dtype=np.int64).ravel()
    if perm.shape[0] != n or not np.array_equal(np.sort(perm), np.arange(n)):
        raise ValueError("not a valid permutation of 0..n-1")
    return perm
