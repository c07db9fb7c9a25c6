import numpy as np
import pytest
from sklearn.base import clone

from vlgp.estimator import VecchiaLaplaceGGP
from vlgp.kernels import MaternParams
from vlgp.likelihoods import Gaussian, Poisson
from vlgp.oracle import simulate_data, simulate_gp
from vlgp.vecchia import build_spec_iw
from vlgp.vl import integrated_loglik


@pytest.fixture
def poisson_data(rng):
    coords = rng.random((80, 2))
    y = simulate_gp(coords, MaternParams(1.0, 0.2, 0.5), 0.0, random_state=rng)
    z = simulate_data(y, Poisson(), random_state=rng)
    return coords, z


class TestSklearnProtocol:
    def test_get_set_params_roundtrip(self):
        est = VecchiaLaplaceGGP(likelihood="poisson", m=7, range=0.1)
        params = est.get_params()
        assert params["m"] == 7
        assert params["range"] == 0.1
        est.set_params(m=9)
        assert est.m == 9

    def test_clone(self):
        est = VecchiaLaplaceGGP(likelihood="gamma", lik_param=2.0, smoothness=1.5)
        c = clone(est)
        assert c.lik_param == 2.0
        assert c.smoothness == 1.5

    def test_unfitted_predict_raises(self, rng):
        with pytest.raises(RuntimeError, match="not fitted"):
            VecchiaLaplaceGGP().predict(rng.random((3, 2)))


class TestFitPredict:
    def test_fit_sets_attributes(self, poisson_data):
        coords, z = poisson_data
        est = VecchiaLaplaceGGP(likelihood="poisson", m=8).fit(coords, z)
        assert est.converged_
        assert est.alpha_.shape == (80,)
        assert est.niter_ >= 1
        assert est.spec_.scheme == "rf"  # auto picks response-first in 2-D

    def test_auto_scheme_1d(self, rng):
        coords = np.sort(rng.random(40)).reshape(-1, 1)
        y = simulate_gp(coords, MaternParams(1.0, 0.1, 0.5), 0.0, random_state=rng)
        z = simulate_data(y, Poisson(), random_state=rng)
        est = VecchiaLaplaceGGP(likelihood="poisson", m=4).fit(coords, z)
        assert est.spec_.scheme == "iw"
        assert est.spec_.ordering.kind == "coordinate"

    def test_gaussian_one_iteration(self, rng):
        coords = rng.random((50, 2))
        y = simulate_gp(coords, MaternParams(1.0, 0.2, 0.5), 0.0, random_state=rng)
        z = simulate_data(y, Gaussian(0.1), random_state=rng)
        est = VecchiaLaplaceGGP(likelihood="gaussian", lik_param=0.1, m=10).fit(coords, z)
        assert est.niter_ == 1

    def test_predict_mean_and_std(self, poisson_data, rng):
        coords, z = poisson_data
        est = VecchiaLaplaceGGP(likelihood="poisson", m=8).fit(coords, z)
        Xnew = rng.random((5, 2)) + 2.0
        mean, std = est.predict(Xnew, return_std=True)
        assert mean.shape == std.shape == (5,)
        # far from the data the posterior reverts toward the prior
        np.testing.assert_allclose(std, 1.0, rtol=0.05)

    def test_predict_data_scale(self, poisson_data, rng):
        coords, z = poisson_data
        est = VecchiaLaplaceGGP(likelihood="poisson", m=8).fit(coords, z)
        Xnew = rng.random((5, 2))
        latent, std = est.predict(Xnew, return_std=True)
        data = est.predict(Xnew, data_scale=True)
        np.testing.assert_allclose(data, np.exp(latent + std**2 / 2))

    def test_sample_posterior_shape(self, poisson_data):
        coords, z = poisson_data
        est = VecchiaLaplaceGGP(likelihood="poisson", m=8).fit(coords, z)
        draws = est.sample_posterior(9, random_state=1)
        assert draws.shape == (9, 80)

    def test_missing_lik_param_rejected(self, poisson_data):
        coords, z = poisson_data
        with pytest.raises(ValueError):
            VecchiaLaplaceGGP(likelihood="gaussian").fit(coords, z)


class TestLogMarginalLikelihood:
    def test_matches_direct_call(self, poisson_data):
        coords, z = poisson_data
        est = VecchiaLaplaceGGP(likelihood="poisson", m=8, scheme="iw").fit(coords, z)
        direct = integrated_loglik(
            z, coords, build_spec_iw(coords, 8), Poisson(), MaternParams(1.0, 0.05, 0.5)
        )
        assert est.log_marginal_likelihood() == pytest.approx(direct, abs=1e-8)

    def test_rf_fit_builds_iw_for_likelihood(self, poisson_data):
        coords, z = poisson_data
        est = VecchiaLaplaceGGP(likelihood="poisson", m=8, scheme="rf").fit(coords, z)
        assert np.isfinite(est.log_marginal_likelihood())


class TestEstimateDuringFit:
    def test_range_estimated(self, rng):
        params = MaternParams(1.0, 0.12, 0.5)
        coords = rng.random((120, 2))
        y = simulate_gp(coords, params, 0.0, random_state=rng)
        z = simulate_data(y, Gaussian(0.01), random_state=rng)
        est = VecchiaLaplaceGGP(
            likelihood="gaussian", lik_param=0.01, m=10, range=0.05, estimate=("range",)
        ).fit(coords, z)
        assert hasattr(est, "theta_")
        assert est.kernel_.range == est.theta_["range"]
        assert 0.01 < est.theta_["range"] < 1.0
