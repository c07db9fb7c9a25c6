"""Shared dense builders for the sparse-container tests."""

import numpy as np
import scipy.sparse as sp

from vlgp.sparse import SparseSym, SparseUpperTri


def upper_from_dense(A):
    """Pack a dense upper-triangular matrix into the CSC container."""
    A = np.asarray(A, dtype=np.float64)
    n = A.shape[0]
    cols = []
    indptr = [0]
    data = []
    for j in range(n):
        rows = [i for i in range(j + 1) if A[i, j] != 0 or i == j]
        cols.extend(rows)
        data.extend(A[i, j] for i in rows)
        indptr.append(len(cols))
    return SparseUpperTri(
        n=n,
        indptr=np.array(indptr),
        indices=np.array(cols),
        data=np.array(data),
    )


def sym_from_dense(A):
    A = np.asarray(A, dtype=np.float64)
    n = A.shape[0]
    Au = sp.triu(sp.csc_matrix(A), format="csc")
    Au.sort_indices()
    return SparseSym(n=n, indptr=Au.indptr, indices=Au.indices, data=Au.data)


def random_upper(rng, n, density=0.2):
    A = np.triu(rng.random((n, n)) * (rng.random((n, n)) < density), k=1)
    A += np.diag(rng.uniform(0.5, 2.0, n))
    return A


def random_spd(rng, n):
    B = rng.normal(size=(n, n))
    return B @ B.T + n * np.eye(n)
