import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vlgp.kernels import (
    MaternParams,
    MeanModel,
    _matern_bessel,
    cov_matrix,
    matern,
    mean_vector,
)

positive = st.floats(min_value=1e-2, max_value=1e2)


class TestMatern:
    def test_zero_distance_gives_variance(self):
        for nu in (0.5, 1.5, 2.5, 0.8, 3.0):
            p = MaternParams(2.3, 0.7, nu)
            assert matern(0.0, p) == pytest.approx(2.3)

    def test_exponential_closed_form(self):
        p = MaternParams(1.0, 0.05, 0.5)
        assert matern(0.05, p) == pytest.approx(np.exp(-1.0), abs=1e-12)

    @pytest.mark.parametrize("nu", [0.5, 1.5, 2.5])
    def test_closed_forms_match_bessel_path(self, nu):
        p = MaternParams(1.0, 1.0, nu)
        h = np.linspace(1e-8, 5.0, 200)
        np.testing.assert_allclose(matern(h, p), _matern_bessel(h, p), atol=1e-10)

    def test_nu_three_halves_hand_value(self):
        p = MaternParams(1.0, 1.0, 1.5)
        expected = (1 + np.sqrt(3)) * np.exp(-np.sqrt(3))
        assert matern(1.0, p) == pytest.approx(expected, abs=1e-12)
        assert _matern_bessel(np.array(1.0), p) == pytest.approx(expected, abs=1e-10)

    def test_negative_distance_rejected(self):
        with pytest.raises(ValueError):
            matern(-0.1, MaternParams())

    def test_large_distance_underflows_to_zero(self):
        assert matern(1e4, MaternParams(1.0, 0.01, 2.2)) == 0.0

    @settings(max_examples=40, deadline=None)
    @given(positive, positive, st.floats(min_value=0.1, max_value=4.0))
    def test_monotone_non_increasing(self, variance, rng_, nu):
        p = MaternParams(variance, rng_, nu)
        h = np.linspace(0, 8 * rng_, 120)
        vals = matern(h, p)
        assert np.all(np.diff(vals) <= 1e-12 * variance)

    @settings(max_examples=40, deadline=None)
    @given(positive, st.floats(min_value=0.2, max_value=3.0), st.floats(min_value=0.1, max_value=5.0))
    def test_scale_invariance(self, lam, c, h):
        base = matern(h, MaternParams(1.0, lam, 1.2))
        scaled = matern(c * h, MaternParams(1.0, c * lam, 1.2))
        assert base == pytest.approx(scaled, rel=1e-12, abs=1e-300)

    def test_params_validated(self):
        with pytest.raises(ValueError):
            MaternParams(-1.0, 0.1, 0.5)
        with pytest.raises(ValueError):
            MaternParams(1.0, 0.0, 0.5)
        with pytest.raises(ValueError):
            MaternParams(1.0, 0.1, np.inf)


class TestCovMatrix:
    def test_single_point(self):
        K = cov_matrix([[0.3, 0.4]], [[0.3, 0.4]], MaternParams(1.7, 0.1, 0.5))
        np.testing.assert_allclose(K, [[1.7]])

    def test_same_set_symmetric_bitwise(self, rng):
        X = rng.random((30, 2))
        K = cov_matrix(X, X, MaternParams(1.0, 0.3, 1.5))
        assert np.array_equal(K, K.T)
        np.testing.assert_allclose(np.diag(K), 1.0)

    def test_positive_semidefinite(self, rng):
        X = rng.random((5, 2))
        K = cov_matrix(X, X, MaternParams(2.0, 0.4, 0.5))
        eigs = np.linalg.eigvalsh(K)
        assert eigs.min() >= -1e-10 * 2.0

    def test_cross_block(self, rng):
        A = rng.random((4, 2))
        B = rng.random((6, 2))
        p = MaternParams(1.0, 0.2, 0.5)
        K = cov_matrix(A, B, p)
        assert K.shape == (4, 6)
        for i in range(4):
            for j in range(6):
                h = np.linalg.norm(A[i] - B[j])
                assert K[i, j] == pytest.approx(float(matern(h, p)))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            cov_matrix(np.zeros((2, 2)), np.zeros((2, 3)), MaternParams())


class TestMeanVector:
    def test_constant(self, rng):
        X = rng.random((7, 2))
        np.testing.assert_allclose(mean_vector(X, MeanModel.constant(2.5)), 2.5)
        np.testing.assert_allclose(mean_vector(X, 2.5), 2.5)

    def test_identity_slope_1d(self):
        X = np.array([[0.1], [0.4], [0.9]])
        np.testing.assert_allclose(mean_vector(X, np.array([0.0, 1.0])), X[:, 0])

    def test_latitude_trend(self):
        # intercept plus a single latitude slope, second coordinate unused
        lat = np.array([100.0, 2000.0, 35000.0])
        X = np.column_stack([np.zeros(3), lat])
        beta = MeanModel(np.array([-1.515, 0.0, 0.000766]))
        np.testing.assert_allclose(mean_vector(X, beta), -1.515 + 0.000766 * lat)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            mean_vector(np.zeros((3, 2)), np.array([1.0, 2.0]))

    def test_coefficients_validated(self):
        with pytest.raises(ValueError):
            MeanModel(np.array([1.0, np.nan]))
