"""Matern covariance, covariance assembly and polynomial trend means."""

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import gamma as gamma_fn
from scipy.special import kv

from .validation import check_positive

__all__ = ["MaternParams", "MeanModel", "Theta", "matern", "cov_matrix", "mean_vector"]


@dataclass(frozen=True)
class MaternParams:
    """Matern covariance parameters: marginal variance, range and smoothness."""

    variance: float = 1.0
    range: float = 0.05
    smoothness: float = 0.5

    def __post_init__(self):
        check_positive(self.variance, "variance")
        check_positive(self.range, "range")
        check_positive(self.smoothness, "smoothness")


@dataclass(frozen=True)
class MeanModel:
    """Linear trend mean: intercept plus one slope per coordinate.

    ``coefficients`` has length d+1; a length-1 vector is a constant mean
    in any dimension.
    """

    coefficients: np.ndarray

    def __post_init__(self):
        beta = np.atleast_1d(np.asarray(self.coefficients, dtype=np.float64))
        if beta.ndim != 1 or not np.all(np.isfinite(beta)):
            raise ValueError("mean coefficients must be a finite 1-D vector")
        object.__setattr__(self, "coefficients", beta)

    @classmethod
    def constant(cls, value=0.0):
        return cls(np.array([float(value)]))


@dataclass(frozen=True)
class Theta:
    """Full parameter bundle: kernel, mean, and the likelihood scalar
    (noise variance or shape) where the observation model has one."""

    kernel: MaternParams
    mean: MeanModel
    lik_param: float | None = None


def matern(h, params):
    """Matern covariance as a function of distance.

    Uses the sqrt(2 nu) h / range scaling. Half-integer smoothness values
    1/2, 3/2 and 5/2 take the closed forms; anything else goes through the
    modified Bessel function of the second kind.
    """
    h = np.asarray(h, dtype=np.float64)
    if np.any(h < 0):
        raise ValueError("distances must be non-negative")
    nu = params.smoothness
    for half, form in _CLOSED_FORMS.items():
        if abs(nu - half) < 1e-12:
            return params.variance * form(np.sqrt(2 * half) * h / params.range)
    return _matern_bessel(h, params)


def _matern_bessel(h, params):
    """General-smoothness Matern via the Bessel K function."""
    h = np.asarray(h, dtype=np.float64)
    nu = params.smoothness
    x = np.sqrt(2 * nu) * h / params.range
    out = np.empty_like(x)
    zero = x == 0
    out[zero] = 1.0
    xs = x[~zero]
    scale = 2.0 ** (1.0 - nu) / gamma_fn(nu)
    vals = scale * xs**nu * kv(nu, xs)
    # kv underflows to 0 for large arguments, which is the correct limit
    out[~zero] = np.where(np.isfinite(vals), vals, 0.0)
    return params.variance * out


_CLOSED_FORMS = {
    0.5: lambda x: np.exp(-x),
    1.5: lambda x: (1.0 + x) * np.exp(-x),
    2.5: lambda x: (1.0 + x + x**2 / 3.0) * np.exp(-x),
}


def cov_matrix(coords_a, coords_b, params):
    """Dense covariance block between two location sets.

    When the two inputs are the same array the result is built from the
    upper triangle and mirrored, so it is exactly symmetric.
    """
    A = np.atleast_2d(np.asarray(coords_a, dtype=np.float64))
    B = np.atleast_2d(np.asarray(coords_b, dtype=np.float64))
    if A.shape[1] != B.shape[1]:
        raise ValueError("location sets have different dimensions")
    if A.shape == B.shape and np.array_equal(A, B):
        h = cdist(A, A)
        K = matern(h, params)
        iu = np.triu_indices(A.shape[0], k=1)
        K[(iu[1], iu[0])] = K[iu]
        return K
    return matern(cdist(A, B), params)


def mean_vector(coords, mean):
    """Evaluate the trend at each location.

    ``mean`` may be a MeanModel, a coefficient vector of length d+1, or a
    scalar constant.
    """
    X = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    n, d = X.shape
    if isinstance(mean, MeanModel):
        beta = mean.coefficients
    elif np.isscalar(mean) or (isinstance(mean, np.ndarray) and mean.ndim == 0):
        return np.full(n, float(mean))
    else:
        beta = np.asarray(mean, dtype=np.float64).ravel()
    if beta.shape[0] == 1:
        return np.full(n, beta[0])
    if beta.shape[0] != d + 1:
        raise ValueError(f"mean coefficients have length {beta.shape[0]}, expected {d + 1}")
    return beta[0] + X @ beta[1:]


def resolve_mean(coords, mean):
    """Latent mean as a per-location vector.

    Accepts a MeanModel, a scalar, a coefficient vector of length d+1, or
    a precomputed length-n vector (useful for offsets). The second return
    value says whether the mean can also be evaluated at new locations.
    """
    X = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    n, d = X.shape
    if isinstance(mean, MeanModel) or np.isscalar(mean):
        return mean_vector(X, mean), True
    arr = np.asarray(mean, dtype=np.float64).ravel()
    if arr.shape[0] == n and arr.shape[0] != d + 1:
        return arr, False
    return mean_vector(X, arr), True
