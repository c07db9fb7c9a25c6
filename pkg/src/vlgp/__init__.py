"""Vecchia-Laplace approximations for generalized Gaussian processes.

Scalable posterior inference, integrated-likelihood parameter estimation
and prediction for latent Gaussian process models with exponential-family
observations, built on sparse joint precision factors from ordered
conditioning, plus dense exact references for verification.
"""

from .estimator import VecchiaLaplaceGGP
from .geometry import Ordering, coordinate_order, maxmin_order, nearest_m_any, nearest_m_previous
from .kernels import MaternParams, MeanModel, Theta, cov_matrix, matern, mean_vector
from .likelihoods import (
    Bernoulli,
    Gamma,
    Gaussian,
    Poisson,
    PseudoData,
    get_likelihood,
    pseudo_data,
)
from .oracle import (
    DenseLaplace,
    dense_laplace,
    exact_gaussian_marginal,
    lgcp_grid,
    simulate_data,
    simulate_gp,
)
from .scores import ScoreReport, crps_sample, dls, log_score, rrmse
from .sparse import (
    NotPositiveDefiniteError,
    SparseSym,
    SparseUpperTri,
    aat,
    logdet_from_factor,
    rchol,
    solve_upper,
)
from .vecchia import (
    UFactor,
    VecchiaSpec,
    build_spec_iw,
    build_spec_lowrank,
    build_spec_prediction,
    build_spec_rf,
    compute_U,
    posterior,
    posterior_mean,
)
from .vl import (
    LatentPosterior,
    MLResult,
    PredictionResult,
    integrated_loglik,
    loglik_grid,
    ml_estimate,
    predict,
    sample_posterior,
    vl_inference,
)

__version__ = "0.1.0"
