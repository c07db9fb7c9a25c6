"""Sparse upper-triangular storage, reverse Cholesky and triangular solves.

The joint precision factors produced by the conditioning rules are sparse
upper-triangular matrices in a reversed elimination order. Factorizing the
posterior precision W therefore needs a Cholesky taken in reverse
row-column order: rchol(W) = rev(chol(rev(W))). The factorization is an
up-looking sparse Cholesky with symbolic fill-in determined through an
elimination-tree pass, compiled with numba. Symmetric products use
scipy.sparse matmul behind the same interfaces.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from numba import njit

__all__ = [
    "SparseUpperTri",
    "SparseSym",
    "NotPositiveDefiniteError",
    "aat",
    "rchol",
    "solve_upper",
    "logdet_from_factor",
]


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Raised when a pivot is non-positive; ``column`` names the offender."""

    def __init__(self, column, what="matrix"):
        self.column = int(column)
        super().__init__(f"{what} is not positive definite at column {self.column}")


@dataclass
class SparseUpperTri:
    """Upper-triangular matrix in compressed sparse column form.

    Row indices are sorted ascending within each column, so the diagonal
    entry is the last one in its column. Diagonals must be present and
    strictly positive.
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        self.indptr = np.ascontiguousarray(self.indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(self.indices, dtype=np.int64)
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)
        if self.indptr.shape[0] != self.n + 1:
            raise ValueError("indptr length must be n + 1")
        last = self.indptr[1:] - 1
        if np.any(np.diff(self.indptr) < 1):
            raise ValueError("every column needs at least its diagonal entry")
        if not np.array_equal(self.indices[last], np.arange(self.n)):
            raise ValueError("columns must end with their diagonal entry")
        if np.any(self.data[last] <= 0):
            bad = int(np.argmax(self.data[last] <= 0))
            raise NotPositiveDefiniteError(bad, "triangular factor")

    @property
    def nnz(self):
        return int(self.indptr[-1])

    def diagonal(self):
        return self.data[self.indptr[1:] - 1]

    def to_scipy(self):
        return sp.csc_matrix(
            (self.data, self.indices, self.indptr), shape=(self.n, self.n)
        )

    def to_dense(self):
        return self.to_scipy().toarray()

    def max_column_nnz(self):
        return int(np.max(np.diff(self.indptr)))

    def dump_triplets(self, path):
        """Write the sparsity pattern as 'row col value' lines."""
        with open(path, "w") as fh:
            for j in range(self.n):
                for p in range(self.indptr[j], self.indptr[j + 1]):
                    fh.write(f"{self.indices[p]} {j} {self.data[p]:.17g}\n")


@dataclass
class SparseSym:
    """Symmetric matrix stored as its upper triangle in CSC form."""

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        self.indptr = np.ascontiguousarray(self.indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(self.indices, dtype=np.int64)
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)
        if not np.all(np.isfinite(self.data)):
            raise ValueError("symmetric matrix entries must be finite")

    @property
    def nnz(self):
        return int(self.indptr[-1])

    def to_scipy_upper(self):
        return sp.csc_matrix(
            (self.data, self.indices, self.indptr), shape=(self.n, self.n)
        )

    def to_dense(self):
        U = self.to_scipy_upper().toarray()
        return U + np.triu(U, 1).T


def aat(u, rows=None):
    """Exact product A A' for A = the selected rows of ``u``.

    Returns the symmetric result as a SparseSym. ``rows=None`` keeps all
    rows.
    """
    U = u.to_scipy() if isinstance(u, SparseUpperTri) else sp.csc_matrix(u)
    A = U.tocsr()
    if rows is not None:
        A = A[np.asarray(rows, dtype=np.int64)]
    W = (A @ A.T).tocsc()
    W.sort_indices()
    Wu = sp.triu(W, format="csc")
    Wu.sort_indices()
    return SparseSym(
        n=A.shape[0],
        indptr=Wu.indptr.astype(np.int64),
        indices=Wu.indices.astype(np.int64),
        data=Wu.data.astype(np.float64),
    )


def rchol(w):
    """Cholesky factor of ``w`` in reverse row-column order.

    Returns the upper-triangular V with V V' = w. Fill-in beyond the
    pattern of ``w`` is discovered symbolically via the elimination tree
    of the reversed matrix. A non-positive pivot raises
    NotPositiveDefiniteError naming the failing column of ``w``.
    """
    n = w.n
    # reverse rows and columns; the upper triangle maps onto itself with
    # (i, j) -> (n-1-j, n-1-i), which permutes entries across columns
    rows, cols = _expand_csc(w.indptr, w.indices)
    r_new = n - 1 - cols
    c_new = n - 1 - rows
    order = np.lexsort((r_new, c_new))
    Ap = np.zeros(n + 1, dtype=np.int64)
    np.add.at(Ap, c_new + 1, 1)
    Ap = np.cumsum(Ap)
    Ai = r_new[order]
    Ax = w.data[order]

    parent = _etree(n, Ap, Ai)
    counts = _col_counts(n, Ap, Ai, parent)
    Lp = np.zeros(n + 1, dtype=np.int64)
    Lp[1:] = np.cumsum(counts)
    Li, Lx, bad = _chol_up(n, Ap, Ai, Ax, parent, Lp)
    if bad >= 0:
        raise NotPositiveDefiniteError(n - 1 - bad)

    # map the lower factor of the reversed matrix back: every column is
    # reversed in place and relabelled
    nnz = int(Lp[-1])
    sizes = np.diff(Lp)
    Vp = np.zeros(n + 1, dtype=np.int64)
    Vp[1:] = np.cumsum(sizes[::-1])
    col_of = np.repeat(np.arange(n), sizes)
    pos_in_col = np.arange(nnz) - Lp[col_of]
    b = n - 1 - col_of
    newpos = Vp[b] + (sizes[col_of] - 1 - pos_in_col)
    Vi = np.empty(nnz, dtype=np.int64)
    Vx = np.empty(nnz, dtype=np.float64)
    Vi[newpos] = n - 1 - Li
    Vx[newpos] = Lx
    return SparseUpperTri(n=n, indptr=Vp, indices=Vi, data=Vx)


def solve_upper(v, b, transpose=False):
    """Solve V x = b, or V' x = b when ``transpose`` is set."""
    b = np.asarray(b, dtype=np.float64)
    if b.shape[-1] != v.n:
        raise ValueError(f"right-hand side has length {b.shape[-1]}, expected {v.n}")
    if b.ndim == 1:
        fn = _solve_upper_t_kernel if transpose else _solve_upper_kernel
        return fn(v.n, v.indptr, v.indices, v.data, np.ascontiguousarray(b))
    return np.stack([solve_upper(v, row, transpose) for row in b])


def logdet_from_factor(v):
    """log det(V V') = 2 sum(log V_ii)."""
    return 2.0 * float(np.sum(np.log(v.diagonal())))


def inverse_unit_sqnorms(v, targets):
    """Squared norms ||V^{-1} e_i||^2 for each target index i.

    These are the marginal variances of a Gaussian with precision factor
    V (covariance (V V')^{-1}).
    """
    targets = np.asarray(targets, dtype=np.int64)
    return _inv_unit_sqnorms(v.n, v.indptr, v.indices, v.data, targets)


def _expand_csc(indptr, indices):
    cols = np.repeat(np.arange(len(indptr) - 1), np.diff(indptr))
    return indices.copy(), cols


@njit(cache=True)
def _etree(n, Ap, Ai):
    # Liu's elimination-tree algorithm with path compression
    parent = np.full(n, -1, dtype=np.int64)
    ancestor = np.full(n, -1, dtype=np.int64)
    for k in range(n):
        for p in range(Ap[k], Ap[k + 1]):
            i = Ai[p]
            while i != -1 and i < k:
                nxt = ancestor[i]
                ancestor[i] = k
                if nxt == -1:
                    parent[i] = k
                i = nxt
    return parent


@njit(cache=True)
def _col_counts(n, Ap, Ai, parent):
    # nnz per column of L, counting row patterns via etree walks
    w = np.full(n, -1, dtype=np.int64)
    counts = np.ones(n, dtype=np.int64)
    for k in range(n):
        w[k] = k
        for p in range(Ap[k], Ap[k + 1]):
            i = Ai[p]
            if i >= k:
                continue
            while i != -1 and w[i] != k:
                counts[i] += 1
                w[i] = k
                i = parent[i]
    return counts


@njit(cache=True)
def _chol_up(n, Ap, Ai, Ax, parent, Lp):
    # up-looking Cholesky: computes row k of L from the already-finished
    # rows, storing entries column-wise; pattern of row k comes from
    # walking the etree from each nonzero of A[:, k]
    nnz = Lp[n]
    Li = np.empty(nnz, dtype=np.int64)
    Lx = np.empty(nnz, dtype=np.float64)
    free = Lp[:n].copy()
    w = np.full(n, -1, dtype=np.int64)
    x = np.zeros(n, dtype=np.float64)
    s = np.empty(n, dtype=np.int64)
    path = np.empty(n, dtype=np.int64)
    for k in range(n):
        top = n
        w[k] = k
        dkk = 0.0
        for p in range(Ap[k], Ap[k + 1]):
            i = Ai[p]
            if i > k:
                continue
            if i == k:
                dkk = Ax[p]
                continue
            x[i] = Ax[p]
            ln = 0
            while i != -1 and w[i] != k:
                path[ln] = i
                ln += 1
                w[i] = k
                i = parent[i]
            while ln > 0:
                ln -= 1
                top -= 1
                s[top] = path[ln]
        for idx in range(top, n):
            j = s[idx]
            pj = Lp[j]
            lkj = x[j] / Lx[pj]
            x[j] = 0.0
            for p in range(pj + 1, free[j]):
                x[Li[p]] -= Lx[p] * lkj
            dkk -= lkj * lkj
            q = free[j]
            free[j] += 1
            Li[q] = k
            Lx[q] = lkj
        if dkk <= 0.0 or not np.isfinite(dkk):
            return Li, Lx, k
        q = free[k]
        free[k] += 1
        Li[q] = k
        Lx[q] = np.sqrt(dkk)
    return Li, Lx, -1


@njit(cache=True)
def _solve_upper_kernel(n, Vp, Vi, Vx, b):
    # back substitution, column oriented; diagonal is last in each column
    x = b.copy()
    for j in range(n - 1, -1, -1):
        pend = Vp[j + 1] - 1
        xj = x[j] / Vx[pend]
        x[j] = xj
        if xj != 0.0:
            for p in range(Vp[j], pend):
                x[Vi[p]] -= Vx[p] * xj
    return x


@njit(cache=True)
def _solve_upper_t_kernel(n, Vp, Vi, Vx, b):
    # forward substitution with V': row j of V' is column j of V
    x = np.empty_like(b)
    for j in range(n):
        acc = b[j]
        pend = Vp[j + 1] - 1
        for p in range(Vp[j], pend):
            acc -= Vx[p] * x[Vi[p]]
        x[j] = acc / Vx[pend]
    return x


@njit(cache=True)
def _inv_unit_sqnorms(n, Vp, Vi, Vx, targets):
    out = np.empty(targets.shape[0], dtype=np.float64)
    x = np.zeros(n, dtype=np.float64)
    for t in range(targets.shape[0]):
        i = targets[t]
        x[i] = 1.0
        acc = 0.0
        for j in range(i, -1, -1):
            pend = Vp[j + 1] - 1
            xj = x[j] / Vx[pend]
            x[j] = 0.0
            if xj != 0.0:
                acc += xj * xj
                for p in range(Vp[j], pend):
                    x[Vi[p]] -= Vx[p] * xj
        out[t] = acc
    return out
