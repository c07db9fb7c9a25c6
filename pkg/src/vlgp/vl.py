"""Latent posterior inference, integrated likelihood and prediction.

The mode of the latent posterior is found by iterating Gaussian
posterior-mean updates on pseudo-data, with the joint factor rebuilt from
the current pseudo-variances at every step. Once the mode is found, the
same factor yields an approximate integrated likelihood for parameter
search, and prediction at new locations runs one more posterior-mean
computation on a response-first joint over observed and new points.
"""

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .kernels import MaternParams, MeanModel, mean_vector, resolve_mean
from .likelihoods import PseudoData, gaussian_logpdf, get_likelihood
from .sparse import NotPositiveDefiniteError, aat, inverse_unit_sqnorms, solve_upper
from .validation import check_coords, check_vector
from .vecchia import (
    build_spec_iw,
    build_spec_prediction,
    compute_U,
    posterior,
    posterior_mean,
)

__all__ = [
    "LatentPosterior",
    "PredictionResult",
    "MLResult",
    "vl_inference",
    "integrated_loglik",
    "ml_estimate",
    "loglik_grid",
    "predict",
    "sample_posterior",
]

_POSITIVE_PARAMS = frozenset({"variance", "range", "smoothness", "lik_param"})


@dataclass
class LatentPosterior:
    """Converged state of the mode-finding iteration.

    ``alpha``, the pseudo-data and ``mu`` are in the original input
    order; the precision factor ``V`` (with W = V V') and the joint
    factor ``U`` live in the latent ordering carried by ``spec``.
    """

    alpha: np.ndarray
    V: object
    W: object
    U: object
    pseudo: PseudoData
    iterations: int
    converged: bool
    steps: list
    spec: object
    params: MaternParams
    likelihood: object
    mean: object
    coords: np.ndarray
    mu: np.ndarray
    z: np.ndarray

    def to_ordered(self, v):
        return np.asarray(v)[self.spec.ordering.perm]

    def from_ordered(self, v):
        v = np.asarray(v)
        out = np.empty_like(v)
        out[self.spec.ordering.perm] = v
        return out

    def sample(self, count, random_state=None):
        """Joint posterior draws, one per row, in the input order."""
        draws = sample_posterior(self.V, self.to_ordered(self.alpha), count, random_state)
        out = np.empty_like(draws)
        out[:, self.spec.ordering.perm] = draws
        return out


@dataclass
class PredictionResult:
    """Posterior summaries at prediction locations (input order).

    ``observed_mean`` carries the joint posterior means at the observed
    locations, and ``data_mean`` the posterior mean on the data scale
    where one is available.
    """

    mean: np.ndarray
    variance: np.ndarray
    observed_mean: np.ndarray
    data_mean: np.ndarray | None = None
    samples: np.ndarray | None = None


@dataclass
class MLResult:
    """Outcome of the likelihood search."""

    theta: dict
    loglik: float
    trace: list
    n_evals: int
    success: bool
    inner_iterations: int
    message: str = ""


def _check_spec_matches(spec, coords):
    if spec.n_latent != coords.shape[0] or not np.array_equal(
        spec.coords, coords[spec.ordering.perm]
    ):
        raise ValueError("specification was built for different locations")
    if not spec.has_response.all():
        raise ValueError("inference needs a response at every location")


def vl_inference(
    z,
    coords,
    spec,
    likelihood,
    params,
    mean=0.0,
    epsilon=1e-6,
    max_iter=50,
    y0=None,
):
    """Find the latent posterior mode by iterated pseudo-data updates.

    Starting from the likelihood's default start (the prior mean, or the
    link-transformed data for unbounded log links) or from ``y0``, each
    pass recomputes the pseudo-data at the current latent values,
    rebuilds the joint factor from the new pseudo-variances, and takes
    the implied posterior mean as the next iterate. Stops when the
    root-mean-square step falls below ``epsilon``, or as soon as the
    pseudo-data repeat exactly, which they do after one update for the
    Gaussian likelihood. The returned factor is re-evaluated at the
    final iterate, so the posterior, the integrated likelihood and
    predictions all see the curvature at the mode. Non-convergence
    within ``max_iter`` is reported through the ``converged`` flag, not
    raised.
    """
    coords = check_coords(coords)
    _check_spec_matches(spec, coords)
    z = likelihood.validate(z)
    if z.shape[0] != coords.shape[0]:
        raise ValueError("data and locations differ in length")
    mu_user, _ = resolve_mean(coords, mean)
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")

    perm = spec.ordering.perm
    zo = z[perm]
    muo = mu_user[perm]
    if y0 is None:
        y = likelihood.initial_latent(zo, muo)
    else:
        y = check_vector(y0, len(zo), "warm start")[perm]

    U = V = None
    t_prev = d_prev = None
    steps = []
    converged = False
    iterations = 0
    for _ in range(max_iter):
        pd = likelihood.pseudo_data(zo, y)
        if (
            t_prev is not None
            and np.array_equal(pd.t, t_prev)
            and np.array_equal(pd.d, d_prev)
        ):
            # unchanged pseudo-data mean the next iterate equals the
            # current one; the factor on hand is already at the mode
            converged = True
            break
        U = compute_U(spec, params, pd.d)
        _, V = posterior(U, need_w=False)
        y_new = posterior_mean(U, V, pd.t, muo)
        iterations += 1
        step = float(np.sqrt(np.mean((y_new - y) ** 2)))
        steps.append(step)
        y = y_new
        t_prev, d_prev = pd.t, pd.d
        if step < epsilon:
            converged = True
            break

    pd_mode = likelihood.pseudo_data(zo, y)
    if not (np.array_equal(pd_mode.t, t_prev) and np.array_equal(pd_mode.d, d_prev)):
        U = compute_U(spec, params, pd_mode.d)
        _, V = posterior(U, need_w=False)
    W = aat(U.u_y)

    def unperm(v):
        out = np.empty_like(v)
        out[perm] = v
        return out

    return LatentPosterior(
        alpha=unperm(y),
        V=V,
        W=W,
        U=U,
        pseudo=PseudoData(t=unperm(pd_mode.t), d=unperm(pd_mode.d)),
        iterations=iterations,
        converged=converged,
        steps=steps,
        spec=spec,
        params=params,
        likelihood=likelihood,
        mean=mean,
        coords=coords,
        mu=mu_user,
        z=z,
    )


def integrated_loglik(
    z,
    coords,
    spec,
    likelihood,
    params,
    mean=0.0,
    epsilon=1e-6,
    max_iter=50,
    y0=None,
    return_posterior=False,
):
    """Approximate integrated log-likelihood of the data.

    Runs the mode search, then combines the Gaussian marginal of the
    pseudo-data implied by the joint factor at the mode,

        -2 log p(t) = -2 sum(log U_ii) + 2 sum(log V_ii)
                      + ttilde'ttilde - tbreve'tbreve + n log(2 pi),

    with ttilde = U_t'(t - mu) and tbreve = V^{-1} U_y ttilde, together
    with the correction sum_i [log g(z_i|alpha_i) - log N(t_i; alpha_i,
    d_i)]. Interweaved-layout specifications only: the response-first
    scheme deliberately models the responses as independent, which makes
    its pseudo-data marginal useless for likelihood comparisons.
    """
    if spec.scheme not in ("iw", "lowrank"):
        raise ValueError("integrated likelihood requires an interweaved-layout spec")
    post = vl_inference(z, coords, spec, likelihood, params, mean, epsilon, max_iter, y0)
    ll = loglik_at_mode(post)
    return (ll, post) if return_posterior else ll


def loglik_at_mode(post):
    """Integrated log-likelihood evaluated from a converged posterior."""
    spec = post.spec
    muo = post.to_ordered(post.mu)
    to = post.to_ordered(post.pseudo.t)
    tt = post.U.u_t.T @ (to - muo)
    tb = solve_upper(post.V, post.U.u_y @ tt)
    m2l = (
        -2.0 * post.U.log_diag_sum()
        + 2.0 * float(np.sum(np.log(post.V.diagonal())))
        + float(tt @ tt)
        - float(tb @ tb)
        + spec.n_response * np.log(2 * np.pi)
    )
    correction = float(
        np.sum(
            post.likelihood.log_density(post.z, post.alpha)
            - gaussian_logpdf(post.pseudo.t, post.alpha, post.pseudo.d)
        )
    )
    return -0.5 * m2l + correction


def _merge_theta(theta):
    kernel_keys = {k: theta[k] for k in ("variance", "range", "smoothness") if k in theta}
    params = MaternParams(
        variance=kernel_keys.get("variance", 1.0),
        range=kernel_keys.get("range", 0.05),
        smoothness=kernel_keys.get("smoothness", 0.5),
    )
    betas = sorted(k for k in theta if k.startswith("beta"))
    mean = None
    if betas:
        mean = MeanModel(np.array([theta[k] for k in betas]))
    return params, theta.get("lik_param"), mean


def ml_estimate(
    z,
    coords,
    likelihood,
    theta0,
    bounds=None,
    fixed=None,
    spec=None,
    mean=0.0,
    m=20,
    ordering=None,
    epsilon=1e-6,
    max_iter=50,
    optimizer_options=None,
):
    """Maximum-likelihood search over named parameters.

    ``theta0`` maps parameter names to starting values; recognized names
    are the kernel parameters (variance, range, smoothness), the
    likelihood scalar lik_param, and mean coefficients beta0, beta1, ....
    Positive parameters are optimized on the log scale with Nelder-Mead.
    ``likelihood`` is a name when lik_param is searched over, otherwise a
    likelihood instance works too. Values for parameters that are held
    out of the search go in ``fixed``. Each evaluation warm-starts the
    inner mode search at the previous mode. ``bounds`` optionally maps
    names to (lo, hi) pairs on the natural scale.
    """
    coords = check_coords(coords)
    if spec is None:
        spec = build_spec_iw(coords, m, ordering)
    fixed = dict(fixed or {})
    names = sorted(theta0)
    x0 = np.array(
        [np.log(theta0[k]) if k in _POSITIVE_PARAMS else theta0[k] for k in names]
    )
    opt_bounds = None
    if bounds:
        opt_bounds = []
        for k in names:
            lo, hi = bounds.get(k, (None, None))
            if k in _POSITIVE_PARAMS:
                lo = np.log(lo) if lo is not None else None
                hi = np.log(hi) if hi is not None else None
            opt_bounds.append((lo, hi))

    lik_name = likelihood if isinstance(likelihood, str) else None
    trace = []
    state = {"warm": None, "inner": 0}

    def build_likelihood(lik_param):
        if lik_name is not None:
            needs_param = lik_name in ("gaussian", "gamma")
            return get_likelihood(lik_name, lik_param if needs_param else None)
        if lik_param is not None:
            raise ValueError("pass the likelihood by name to search over lik_param")
        return likelihood

    def objective(x):
        theta = {
            k: (float(np.exp(v)) if k in _POSITIVE_PARAMS else float(v))
            for k, v in zip(names, x)
        }
        params, lik_param, mean_override = _merge_theta({**fixed, **theta})
        try:
            lik = build_likelihood(lik_param)
            ll, post = integrated_loglik(
                z,
                coords,
                spec,
                lik,
                params,
                mean_override if mean_override is not None else mean,
                epsilon,
                max_iter,
                y0=state["warm"],
                return_posterior=True,
            )
            state["warm"] = post.alpha
            state["inner"] += post.iterations
        except (NotPositiveDefiniteError, np.linalg.LinAlgError, FloatingPointError):
            trace.append((theta, np.nan))
            return 1e10
        trace.append((theta, ll))
        return -ll

    options = {"xatol": 1e-3, "fatol": 1e-4, "maxiter": 200 * len(names)}
    options.update(optimizer_options or {})
    res = minimize(objective, x0, method="Nelder-Mead", bounds=opt_bounds, options=options)
    theta_hat = {
        k: (float(np.exp(v)) if k in _POSITIVE_PARAMS else float(v))
        for k, v in zip(names, res.x)
    }
    return MLResult(
        theta=theta_hat,
        loglik=-float(res.fun),
        trace=trace,
        n_evals=len(trace),
        success=bool(res.success),
        inner_iterations=state["inner"],
        message=str(res.message),
    )


def loglik_grid(
    z,
    coords,
    likelihood,
    grid,
    base=None,
    spec=None,
    mean=0.0,
    m=20,
    ordering=None,
    epsilon=1e-6,
    max_iter=50,
    warm_start=True,
):
    """Integrated log-likelihood over a parameter grid.

    ``grid`` maps parameter names to value arrays; the Cartesian product
    is evaluated in row-major order. Failures at individual points are
    recorded as NaN and the sweep continues. Returns a list of dicts with
    the parameter values and the log-likelihood.
    """
    coords = check_coords(coords)
    if spec is None:
        spec = build_spec_iw(coords, m, ordering)
    base = dict(base or {})
    names = list(grid)
    rows = []
    warm = None
    lik_name = likelihood if isinstance(likelihood, str) else None
    for values in itertools.product(*(np.atleast_1d(grid[k]) for k in names)):
        theta = dict(base)
        theta.update({k: float(v) for k, v in zip(names, values)})
        try:
            params, lik_param, mean_override = _merge_theta(theta)
            if lik_name is not None:
                needs_param = lik_name in ("gaussian", "gamma")
                lik = get_likelihood(lik_name, lik_param if needs_param else None)
            else:
                lik = likelihood
            ll, post = integrated_loglik(
                z,
                coords,
                spec,
                lik,
                params,
                mean_override if mean_override is not None else mean,
                epsilon,
                max_iter,
                y0=warm if warm_start else None,
                return_posterior=True,
            )
            if warm_start:
                warm = post.alpha
        except (NotPositiveDefiniteError, np.linalg.LinAlgError, ValueError):
            ll = np.nan
        row = {k: float(v) for k, v in zip(names, values)}
        row["loglik"] = float(ll)
        rows.append(row)
    return rows


def predict(
    post,
    pred_coords,
    m=None,
    n_samples=0,
    random_state=None,
    pred_mean=None,
):
    """Posterior of the latent field at new locations.

    Builds a response-first joint over pseudo-data, observed latents and
    prediction latents, with the pseudo-data and their variances frozen
    at the converged mode. Means come from one posterior-mean pass;
    marginal variances are squared norms of columns of the inverse
    factor. Data-scale means use exp(mean + var/2) under a log link, the
    identity for Gaussian data, and sample averages otherwise when
    samples are requested.
    """
    if not post.converged:
        raise ValueError("prediction requires a converged posterior")
    pred_coords = np.asarray(pred_coords, dtype=np.float64)
    if pred_coords.size == 0:
        pred_coords = np.zeros((0, post.coords.shape[1]))
    pred_coords = check_coords(pred_coords, allow_empty=True)
    n_obs = post.coords.shape[0]
    n_pred = pred_coords.shape[0]
    m = post.spec.m if m is None else m

    jspec = build_spec_prediction(post.coords, pred_coords, m)
    perm = jspec.ordering.perm  # into [observed | prediction] stacking

    mu_all = np.concatenate([post.mu, _prediction_mean(post, pred_coords, pred_mean)])
    mu_lat = mu_all[perm]
    obs_latents = jspec.response_latents()
    t_joint = post.pseudo.t[perm[obs_latents]]
    d_joint = post.pseudo.d[perm[obs_latents]]

    U = compute_U(jspec, post.params, d_joint)
    _, V = posterior(U, need_w=False)
    mean_lat = posterior_mean(U, V, t_joint, mu_lat)

    is_pred = perm >= n_obs
    pred_targets = np.flatnonzero(is_pred)
    var_lat = inverse_unit_sqnorms(V, pred_targets)

    mean_out = np.empty(n_pred)
    mean_out[perm[pred_targets] - n_obs] = mean_lat[pred_targets]
    var_out = np.empty(n_pred)
    var_out[perm[pred_targets] - n_obs] = var_lat
    obs_out = np.empty(n_obs)
    obs_out[perm[~is_pred]] = mean_lat[~is_pred]

    samples = None
    if n_samples:
        draws = sample_posterior(V, mean_lat, n_samples, random_state)
        samples = np.empty((n_samples, n_pred))
        samples[:, perm[pred_targets] - n_obs] = draws[:, pred_targets]

    data_mean = post.likelihood.data_scale_mean(mean_out, var_out)
    if data_mean is None and samples is not None:
        data_mean = post.likelihood.conditional_mean(samples).mean(axis=0)

    return PredictionResult(
        mean=mean_out,
        variance=var_out,
        observed_mean=obs_out,
        data_mean=data_mean,
        samples=samples,
    )


def _prediction_mean(post, pred_coords, pred_mean):
    if pred_coords.shape[0] == 0:
        return np.empty(0)
    if pred_mean is not None:
        return check_vector(pred_mean, pred_coords.shape[0], "prediction mean")
    _, functional = resolve_mean(post.coords, post.mean)
    if not functional:
        raise ValueError(
            "the fitted mean is a per-location vector; pass pred_mean explicitly"
        )
    return mean_vector(pred_coords, post.mean)


def sample_posterior(V, mean, count, random_state=None):
    """Draws from N(mean, (V V')^{-1}), one per row.

    Each draw solves V' x = standard normal and adds the mean, so the
    sample covariance converges to (V V')^{-1}. A fixed seed gives
    bit-identical output.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    mean = check_vector(mean, V.n, "mean")
    rng = np.random.default_rng(random_state)
    out = np.empty((count, V.n))
    for s in range(count):
        out[s] = mean + solve_upper(V, rng.standard_normal(V.n), transpose=True)
    return out
