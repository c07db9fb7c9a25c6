"""Estimator wrapper with the scikit-learn fit/predict protocol.

``VecchiaLaplaceGGP`` bundles the ordering, conditioning specification,
likelihood and kernel into a single object with ``fit``/``predict`` and
``get_params``/``set_params``, so the model composes with scikit-learn
tooling (cloning, grid search over its parameters, pipelines that pass
coordinates through).
"""

import numpy as np
from sklearn.base import BaseEstimator

from .kernels import MaternParams, MeanModel
from .likelihoods import get_likelihood
from .validation import check_coords
from .vecchia import build_spec_iw, build_spec_lowrank, build_spec_rf
from .vl import integrated_loglik, ml_estimate, predict, vl_inference

__all__ = ["VecchiaLaplaceGGP"]

_BUILDERS = {"iw": build_spec_iw, "rf": build_spec_rf, "lowrank": build_spec_lowrank}


class VecchiaLaplaceGGP(BaseEstimator):
    """Latent Gaussian process with an exponential-family likelihood.

    Parameters
    ----------
    likelihood : str
        One of "gaussian", "bernoulli", "poisson", "gamma".
    lik_param : float or None
        Noise variance for gaussian, shape for gamma; must be None for
        bernoulli and poisson.
    variance, range, smoothness : float
        Kernel parameters of the latent field.
    beta : float or array-like
        Mean model: a constant, or d+1 trend coefficients.
    scheme : str
        Conditioning scheme: "iw", "rf", "lowrank" or "auto" (interweaved
        in one dimension, response-first otherwise).
    m : int
        Conditioning-set size.
    ordering : str
        "coordinate", "maxmin" or "auto" (coordinate in 1-D, max-min
        otherwise; the low-rank scheme always orders by max-min).
    epsilon : float
        RMS step tolerance of the mode search.
    max_iter : int
        Cap on mode-search iterations.
    estimate : tuple of str
        Parameter names to estimate by maximum likelihood during fit,
        e.g. ("variance", "range"); empty for none.

    Attributes
    ----------
    alpha_ : posterior mode of the latent field at the training locations
    posterior_ : full latent posterior state
    niter_ : number of mode-search iterations
    converged_ : whether the mode search converged
    theta_ : estimated parameter values when ``estimate`` is non-empty
    """

    def __init__(
        self,
        likelihood="gaussian",
        lik_param=None,
        variance=1.0,
        range=0.05,
        smoothness=0.5,
        beta=0.0,
        scheme="auto",
        m=20,
        ordering="auto",
        epsilon=1e-6,
        max_iter=50,
        estimate=(),
    ):
        self.likelihood = likelihood
        self.lik_param = lik_param
        self.variance = variance
        self.range = range
        self.smoothness = smoothness
        self.beta = beta
        self.scheme = scheme
        self.m = m
        self.ordering = ordering
        self.epsilon = epsilon
        self.max_iter = max_iter
        self.estimate = estimate

    def _scheme_for(self, d):
        if self.scheme == "auto":
            return "iw" if d == 1 else "rf"
        if self.scheme not in _BUILDERS:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        return self.scheme

    def _build_spec(self, X, scheme):
        ordering = None if self.ordering == "auto" else self.ordering
        if ordering == "coordinate" and X.shape[1] != 1:
            raise ValueError("coordinate ordering requires 1-D locations")
        return _BUILDERS[scheme](X, self.m, ordering)

    def _mean(self):
        beta = self.beta
        if np.isscalar(beta):
            return float(beta)
        return MeanModel(np.asarray(beta, dtype=np.float64))

    def fit(self, X, z):
        """Run the mode search (optionally after estimating parameters)."""
        X = check_coords(X)
        scheme = self._scheme_for(X.shape[1])
        self.kernel_ = MaternParams(self.variance, self.range, self.smoothness)
        lik_param = self.lik_param
        mean = self._mean()

        if self.estimate:
            theta0 = {}
            for name in self.estimate:
                theta0[name] = {
                    "variance": self.variance,
                    "range": self.range,
                    "smoothness": self.smoothness,
                    "lik_param": lik_param if lik_param is not None else 1.0,
                }[name]
            fixed = {
                "variance": self.variance,
                "range": self.range,
                "smoothness": self.smoothness,
            }
            if lik_param is not None:
                fixed["lik_param"] = lik_param
            for name in theta0:
                fixed.pop(name, None)
            result = ml_estimate(
                z,
                X,
                self.likelihood,
                theta0,
                fixed=fixed,
                spec=build_spec_iw(X, self.m, None if self.ordering == "auto" else self.ordering),
                mean=mean,
                epsilon=self.epsilon,
                max_iter=self.max_iter,
            )
            self.theta_ = result.theta
            self.ml_result_ = result
            self.kernel_ = MaternParams(
                result.theta.get("variance", self.variance),
                result.theta.get("range", self.range),
                result.theta.get("smoothness", self.smoothness),
            )
            lik_param = result.theta.get("lik_param", lik_param)

        lik = get_likelihood(
            self.likelihood,
            lik_param if self.likelihood in ("gaussian", "gamma") else None,
        )
        self.spec_ = self._build_spec(X, scheme)
        self.posterior_ = vl_inference(
            z,
            X,
            self.spec_,
            lik,
            self.kernel_,
            mean=mean,
            epsilon=self.epsilon,
            max_iter=self.max_iter,
        )
        self.alpha_ = self.posterior_.alpha
        self.niter_ = self.posterior_.iterations
        self.converged_ = self.posterior_.converged
        self.X_ = X
        return self

    def predict(self, X, return_std=False, data_scale=False, m=None, n_samples=0, random_state=None):
        """Posterior mean of the latent field (or the data scale) at new
        locations; optionally with posterior standard deviations."""
        self._check_fitted()
        result = predict(
            self.posterior_, X, m=m, n_samples=n_samples, random_state=random_state
        )
        if data_scale:
            if result.data_mean is None:
                raise ValueError(
                    "no closed-form data-scale mean; request n_samples > 0"
                )
            mean = result.data_mean
        else:
            mean = result.mean
        if return_std:
            return mean, np.sqrt(result.variance)
        return mean

    def predict_full(self, X, **kwargs):
        """Full PredictionResult at new locations."""
        self._check_fitted()
        return predict(self.posterior_, X, **kwargs)

    def log_marginal_likelihood(self):
        """Approximate integrated log-likelihood at the fitted parameters,
        always computed through an interweaved specification."""
        self._check_fitted()
        post = self.posterior_
        if self.spec_.scheme in ("iw", "lowrank"):
            spec = self.spec_
        else:
            spec = build_spec_iw(
                self.X_, self.m, None if self.ordering == "auto" else self.ordering
            )
        return integrated_loglik(
            post.z,
            self.X_,
            spec,
            post.likelihood,
            post.params,
            mean=post.mean,
            epsilon=self.epsilon,
            max_iter=self.max_iter,
            y0=post.alpha,
        )

    def sample_posterior(self, count, random_state=None):
        """Joint draws of the latent field at the training locations."""
        self._check_fitted()
        return self.posterior_.sample(count, random_state)

    def _check_fitted(self):
        if not hasattr(self, "posterior_"):
            raise RuntimeError("estimator is not fitted; call fit first")
