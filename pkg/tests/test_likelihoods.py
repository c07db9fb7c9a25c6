import numpy as np
import pytest

from vlgp.likelihoods import (
    D_MAX,
    D_MIN,
    Bernoulli,
    Gamma,
    Gaussian,
    Poisson,
    get_likelihood,
    pseudo_data,
)

ALL_MODELS = [Gaussian(tau2=0.7), Bernoulli(), Poisson(), Gamma(shape=2.0)]


def random_pairs(model, rng, size):
    """Draw (z, y) pairs within each variant's support."""
    y = rng.uniform(-3, 3, size)
    name = model.name
    if name == "gaussian":
        z = rng.normal(y, 1.0)
    elif name == "bernoulli":
        z = rng.integers(0, 2, size).astype(float)
    elif name == "poisson":
        z = rng.poisson(np.exp(y)).astype(float)
    else:
        z = rng.gamma(2.0, np.exp(y) / 2.0) + 1e-6
    return z, y


class TestLogDensity:
    def test_gaussian_at_center(self):
        assert Gaussian(1.0).log_density(0.3, 0.3) == pytest.approx(-0.5 * np.log(2 * np.pi))

    def test_bernoulli_even_odds(self):
        assert Bernoulli().log_density(1.0, 0.0) == pytest.approx(np.log(0.5))

    def test_poisson_two_at_zero(self):
        assert Poisson().log_density(2.0, 0.0) == pytest.approx(-1 - np.log(2))

    def test_gamma_integrates_normalizer(self):
        # absolute density: integrates to one over z on a fine grid
        g = Gamma(shape=2.0)
        z = np.linspace(1e-4, 60, 200000)
        total = np.trapezoid(np.exp(g.log_density(z, 0.5)), z)
        assert total == pytest.approx(1.0, abs=1e-4)


class TestScore:
    def test_poisson_mode(self):
        assert Poisson().score_u(1.0, 0.0) == pytest.approx(0.0)

    def test_bernoulli_half(self):
        assert Bernoulli().score_u(1.0, 0.0) == pytest.approx(0.5)

    @pytest.mark.parametrize("model", ALL_MODELS, ids=lambda m: m.name)
    def test_matches_finite_difference(self, model, rng):
        z, y = random_pairs(model, rng, 100)
        h = 1e-6
        fd = (model.log_density(z, y + h) - model.log_density(z, y - h)) / (2 * h)
        np.testing.assert_allclose(model.score_u(z, y), fd, rtol=1e-5, atol=1e-6)


class TestPseudoVariance:
    def test_bernoulli_at_zero(self):
        assert Bernoulli().pseudo_variance_d(1.0, 0.0) == pytest.approx(4.0)

    def test_poisson_at_zero(self):
        assert Poisson().pseudo_variance_d(3.0, 0.0) == pytest.approx(1.0)

    @pytest.mark.parametrize("model", ALL_MODELS, ids=lambda m: m.name)
    def test_matches_second_difference(self, model, rng):
        z, y = random_pairs(model, rng, 100)
        h = 1e-4
        second = (
            model.log_density(z, y + h)
            - 2 * model.log_density(z, y)
            + model.log_density(z, y - h)
        ) / h**2
        np.testing.assert_allclose(model.pseudo_variance_d(z, y), -1.0 / second, rtol=1e-5)


class TestPseudoData:
    def test_poisson_hand_case(self):
        pd = pseudo_data(np.array([1.0]), np.array([0.0]), Poisson())
        assert pd.t[0] == pytest.approx(0.0)
        assert pd.d[0] == pytest.approx(1.0)

    def test_bernoulli_hand_case(self):
        pd = pseudo_data(np.array([1.0]), np.array([0.0]), Bernoulli())
        assert pd.t[0] == pytest.approx(2.0)
        assert pd.d[0] == pytest.approx(4.0)

    def test_gamma_hand_case(self):
        pd = pseudo_data(np.array([1.0]), np.array([0.0]), Gamma(shape=2.0))
        assert pd.t[0] == pytest.approx(0.0)
        assert pd.d[0] == pytest.approx(0.5)

    def test_gaussian_pseudo_data_is_data_exactly(self, rng):
        z = rng.normal(size=50)
        y = rng.normal(size=50)
        pd = pseudo_data(z, y, Gaussian(tau2=0.37))
        assert np.array_equal(pd.t, z)
        assert np.all(pd.d == 0.37)

    def test_gamma_update_identity(self, rng):
        # y + d*u must reduce to y + (1 - e^y / z) analytically
        g = Gamma(shape=2.0)
        z, y = random_pairs(g, rng, 200)
        direct = y + (1.0 - np.exp(y) / z)
        pd = pseudo_data(z, y, g)
        np.testing.assert_allclose(pd.t, direct, atol=1e-12)

    def test_clamping(self):
        pd = pseudo_data(np.array([1.0]), np.array([-40.0]), Poisson())
        assert pd.d[0] == D_MAX
        pd = pseudo_data(np.array([1.0]), np.array([40.0]), Poisson())
        assert pd.d[0] == D_MIN

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            pseudo_data(np.zeros(3), np.zeros(4), Poisson())


class TestSupportValidation:
    def test_bernoulli(self):
        with pytest.raises(ValueError):
            Bernoulli().validate([0.0, 2.0])

    def test_poisson(self):
        with pytest.raises(ValueError):
            Poisson().validate([-1.0])
        with pytest.raises(ValueError):
            Poisson().validate([1.5])

    def test_gamma_zero_rejected(self):
        with pytest.raises(ValueError):
            Gamma(2.0).validate([0.0])

    def test_gaussian_non_finite(self):
        with pytest.raises(ValueError):
            Gaussian(1.0).validate([np.inf])


class TestRegistry:
    def test_names_and_params(self):
        assert isinstance(get_likelihood("poisson"), Poisson)
        assert get_likelihood("gaussian", 0.5).tau2 == 0.5
        assert get_likelihood("gamma", 3.0).shape == 3.0

    def test_param_requirements(self):
        with pytest.raises(ValueError):
            get_likelihood("gaussian")
        with pytest.raises(ValueError):
            get_likelihood("poisson", 1.0)
        with pytest.raises(ValueError):
            get_likelihood("weibull")


class TestSampling:
    def test_bernoulli_saturated(self, rng):
        z = Bernoulli().sample(rng, np.full(200, 20.0))
        assert np.all(z == 1.0)

    def test_poisson_mean(self, rng):
        z = Poisson().sample(rng, np.ones(10000))
        assert np.mean(z) == pytest.approx(np.e, rel=0.05)

    def test_gamma_mean(self, rng):
        z = Gamma(2.0).sample(rng, np.zeros(10000))
        assert np.mean(z) == pytest.approx(1.0, rel=0.05)

    def test_conditional_means(self):
        assert Gaussian(1.0).conditional_mean(1.3) == 1.3
        assert Poisson().conditional_mean(0.0) == pytest.approx(1.0)
        assert Bernoulli().conditional_mean(0.0) == pytest.approx(0.5)
