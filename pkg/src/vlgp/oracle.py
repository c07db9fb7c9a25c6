"""Dense exact references: simulation, Gaussian posteriors and dense
mode-finding with the full covariance matrix.

Everything here factorizes full n-by-n matrices, so it is only usable at
desk scale; it provides ground truth for the sparse machinery and serves
as the exact baseline in benchmarks.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky

from .kernels import cov_matrix, mean_vector, resolve_mean
from .likelihoods import gaussian_logpdf
from .validation import check_coords, check_vector

__all__ = [
    "DenseLaplace",
    "simulate_gp",
    "simulate_data",
    "dense_laplace",
    "exact_gaussian_marginal",
    "lgcp_grid",
    "newton_step_gradient",
    "newton_step_pseudo_data",
]

# dense factorizations refuse to run above this size
DENSE_GUARD = 20_000
_SIM_JITTER = 1e-10


@dataclass
class DenseLaplace:
    """Mode, curvature and integrated log-likelihood from the dense
    Newton iteration."""

    alpha: np.ndarray
    W: np.ndarray
    loglik: float
    iterations: int
    converged: bool
    t: np.ndarray
    d: np.ndarray
    mu: np.ndarray
    K: np.ndarray


def _dense_K(coords, params, jitter=0.0):
    K = cov_matrix(coords, coords, params)
    if jitter:
        K = K + jitter * params.variance * np.eye(len(K))
    return K


def simulate_gp(coords, params, mean=0.0, random_state=None, jitter=_SIM_JITTER):
    """Draw one realization of the latent field at the given locations.

    Uses a dense Cholesky of K plus jitter * variance on the diagonal;
    the jitter exists only here, never inside the sparse approximation.
    """
    X = check_coords(coords)
    if X.shape[0] > DENSE_GUARD:
        raise ValueError(f"dense simulation capped at n = {DENSE_GUARD}")
    rng = np.random.default_rng(random_state)
    K = _dense_K(X, params, jitter)
    L = cholesky(K, lower=True)
    return mean_vector(X, mean) + L @ rng.standard_normal(X.shape[0])


def simulate_data(y, likelihood, random_state=None):
    """Draw observations conditionally on the latent values."""
    y = np.asarray(y, dtype=np.float64)
    rng = np.random.default_rng(random_state)
    return likelihood.sample(rng, y)


def newton_step_gradient(y, z, likelihood, K_chol, mu):
    """One mode-finding step in its raw form: y + H^{-1} grad, with the
    gradient K^{-1}(mu - y) + u and curvature H = K^{-1} + D^{-1}."""
    u = likelihood.score_u(z, y)
    d = likelihood.pseudo_data(z, y).d
    grad = cho_solve(K_chol, mu - y) + u
    n = len(y)
    Kinv = cho_solve(K_chol, np.eye(n))
    W = Kinv + np.diag(1.0 / d)
    return y + cho_solve(cho_factor(W, lower=True), grad)


def newton_step_pseudo_data(y, z, likelihood, K_chol, mu):
    """The same step rewritten as a Gaussian posterior mean of the
    pseudo-data: mu + W^{-1} D^{-1} (t - mu)."""
    pd = likelihood.pseudo_data(z, y)
    n = len(y)
    Kinv = cho_solve(K_chol, np.eye(n))
    W = Kinv + np.diag(1.0 / pd.d)
    return mu + cho_solve(cho_factor(W, lower=True), (pd.t - mu) / pd.d)


def dense_laplace(
    z,
    coords,
    likelihood,
    params,
    mean=0.0,
    epsilon=1e-6,
    max_iter=50,
    jitter=0.0,
    y0=None,
):
    """Exact mode finding with the full covariance matrix.

    Iterates the pseudo-data posterior-mean map until the RMS step drops
    below ``epsilon`` (the Gaussian likelihood stops after one update,
    when the pseudo-data repeat exactly). Returns the mode, the dense
    posterior precision W = K^{-1} + D^{-1} at the mode, and the
    integrated log-likelihood log N(t; mu, K + D) plus the likelihood
    ratio correction, all evaluated at the mode.
    """
    X = check_coords(coords)
    if X.shape[0] > DENSE_GUARD:
        raise ValueError(f"dense mode finding capped at n = {DENSE_GUARD}")
    z = likelihood.validate(z)
    n = X.shape[0]
    mu, _ = resolve_mean(X, mean)
    K = _dense_K(X, params, jitter)
    K_chol = cho_factor(K, lower=True)
    Kinv = cho_solve(K_chol, np.eye(n))

    if y0 is None:
        y = likelihood.initial_latent(z, mu)
    else:
        y = check_vector(y0, n, "warm start")
    t_prev = d_prev = None
    converged = False
    iterations = 0
    for _ in range(max_iter):
        pd = likelihood.pseudo_data(z, y)
        if (
            t_prev is not None
            and np.array_equal(pd.t, t_prev)
            and np.array_equal(pd.d, d_prev)
        ):
            converged = True
            break
        W = Kinv + np.diag(1.0 / pd.d)
        W_chol = cho_factor(W, lower=True)
        y_new = mu + cho_solve(W_chol, (pd.t - mu) / pd.d)
        iterations += 1
        step = float(np.sqrt(np.mean((y_new - y) ** 2)))
        y = y_new
        t_prev, d_prev = pd.t, pd.d
        if step < epsilon:
            converged = True
            break

    pd = likelihood.pseudo_data(z, y)
    W = Kinv + np.diag(1.0 / pd.d)
    marginal = _gaussian_loglik(pd.t, mu, K + np.diag(pd.d))
    correction = float(np.sum(likelihood.log_density(z, y) - gaussian_logpdf(pd.t, y, pd.d)))
    return DenseLaplace(
        alpha=y,
        W=W,
        loglik=marginal + correction,
        iterations=iterations,
        converged=converged,
        t=pd.t,
        d=pd.d,
        mu=mu,
        K=K,
    )


def _gaussian_loglik(x, mu, cov):
    n = len(x)
    c, low = cho_factor(cov, lower=True)
    resid = cho_solve((c, low), x - mu)
    logdet = 2.0 * float(np.sum(np.log(np.diag(c))))
    return float(-0.5 * ((x - mu) @ resid + logdet + n * np.log(2 * np.pi)))


def exact_gaussian_marginal(z, coords, params, mean, tau2):
    """log N(z; mu, K + tau2 I): the closed-form integrated likelihood
    for Gaussian observations."""
    X = check_coords(coords)
    if X.shape[0] > DENSE_GUARD:
        raise ValueError(f"dense marginal capped at n = {DENSE_GUARD}")
    z = check_vector(z, X.shape[0], "data")
    K = _dense_K(X, params) + tau2 * np.eye(X.shape[0])
    return _gaussian_loglik(z, mean_vector(X, mean), K)


def dense_gp_posterior(t, coords, params, mean, d):
    """Exact Gaussian posterior of the latents given noisy values ``t``
    with noise variances ``d``; returns (mean, covariance)."""
    X = check_coords(coords)
    mu = mean_vector(X, mean)
    K = _dense_K(X, params)
    S = K + np.diag(np.broadcast_to(d, (X.shape[0],)).astype(float))
    post_mean = mu + K @ np.linalg.solve(S, t - mu)
    post_cov = K - K @ np.linalg.solve(S, K)
    return post_mean, post_cov


def dense_kriging(t, coords_obs, coords_new, params, mean, d):
    """Exact Gaussian prediction at new locations given noisy values
    ``t`` at the observed ones; returns (mean, marginal variances)."""
    Xo = check_coords(coords_obs)
    Xn = check_coords(coords_new)
    mu_o = mean_vector(Xo, mean)
    mu_n = mean_vector(Xn, mean)
    S = _dense_K(Xo, params) + np.diag(np.broadcast_to(d, (Xo.shape[0],)).astype(float))
    Kno = cov_matrix(Xn, Xo, params)
    sol = np.linalg.solve(S, Kno.T)
    mean_new = mu_n + Kno @ np.linalg.solve(S, t - mu_o)
    var_new = params.variance - np.einsum("ij,ji->i", Kno, sol)
    return mean_new, var_new


def lgcp_grid(points, lower, upper, cells_per_axis):
    """Grid a point pattern into cell counts.

    Returns (cell centers, counts, cell areas) for a regular grid over
    the box [lower, upper]^d with ``cells_per_axis`` cells along each
    axis. Points outside the box are an error. Cell order is row-major
    over the axes, and the total count equals the number of points.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    lower = np.atleast_1d(np.asarray(lower, dtype=np.float64))
    upper = np.atleast_1d(np.asarray(upper, dtype=np.float64))
    dim = lower.shape[0]
    if pts.size and pts.shape[1] != dim:
        raise ValueError("points and box dimensions differ")
    if np.any(lower >= upper):
        raise ValueError("box bounds must satisfy lower < upper")
    if pts.size and (np.any(pts < lower) or np.any(pts > upper)):
        raise ValueError("points outside the box")
    k = np.broadcast_to(np.asarray(cells_per_axis, dtype=np.int64), (dim,))
    edges = [np.linspace(lower[a], upper[a], k[a] + 1) for a in range(dim)]
    counts, _ = np.histogramdd(pts.reshape(-1, dim), bins=edges)
    centers_1d = [0.5 * (e[1:] + e[:-1]) for e in edges]
    mesh = np.meshgrid(*centers_1d, indexing="ij")
    centers = np.column_stack([m.ravel() for m in mesh])
    areas = np.full(centers.shape[0], np.prod((upper - lower) / k))
    return centers, counts.ravel(), areas
