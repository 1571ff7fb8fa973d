import math

import numpy as np
import pytest

from gal import (
    ConfigError,
    CovarianceSpec,
    DimensionError,
    DomainError,
    PointCloud,
    SeedSpec,
    SummandModel,
    ou_interpolate,
    sample_gaussian,
    sample_sum_replicates,
    sample_sum_replicates_coupled,
)

SEED = SeedSpec(12345, 7)


class TestSeedSpec:
    def test_determinism_bit_identical(self):
        model = SummandModel("centered_bernoulli", n=50, p=3)
        a = sample_sum_replicates(model, 200, SEED)
        b = sample_sum_replicates(model, 200, SEED)
        assert np.array_equal(a.points, b.points)

    def test_distinct_streams_differ(self):
        model = SummandModel("centered_bernoulli", n=50, p=3)
        a = sample_sum_replicates(model, 200, SeedSpec(1, 0))
        b = sample_sum_replicates(model, 200, SeedSpec(1, 1))
        assert not np.array_equal(a.points, b.points)

    def test_child_streams_pure(self):
        assert SEED.child(3, 4) == SEED.child(3, 4)
        assert SEED.child(3, 4) != SEED.child(4, 3)

    def test_stream_cross_correlation(self):
        # |rho| < 4/sqrt(m) coordinatewise for distinct stream ids
        m = 4000
        cov = CovarianceSpec.identity(2)
        a = sample_gaussian(cov, m, SeedSpec(9, 0)).points
        b = sample_gaussian(cov, m, SeedSpec(9, 1)).points
        for k in range(2):
            rho = np.corrcoef(a[:, k], b[:, k])[0, 1]
            assert abs(rho) < 4 / math.sqrt(m)

    def test_invalid_seed_rejected(self):
        with pytest.raises(ConfigError):
            SeedSpec(-1, 0)


class TestCovarianceSpec:
    def test_identity_properties(self):
        cov = CovarianceSpec.identity(4, scale=0.25)
        assert cov.op_norm == pytest.approx(0.25)
        assert cov.lambda_min == pytest.approx(0.25)
        assert cov.sigma_sq_min == pytest.approx(0.25)

    def test_full_rejects_indefinite(self):
        m = np.array([[1.0, 2.0], [2.0, 1.0]])  # eigenvalues 3, -1
        with pytest.raises(ConfigError):
            CovarianceSpec.full(m).sqrt_factor()

    def test_full_clips_tiny_negative_eigenvalue(self):
        # numerically semi-definite input must be accepted
        v = np.array([1.0, 1.0]) / math.sqrt(2)
        m = np.outer(v, v)
        m = m - 1e-14 * np.eye(2)
        a = CovarianceSpec.full(m).sqrt_factor()
        assert np.allclose(a @ a.T, np.outer(v, v), atol=1e-7)

    def test_diagonal_negative_rejected(self):
        with pytest.raises(ConfigError):
            CovarianceSpec.diagonal(np.array([1.0, -0.5]))


class TestSampleSumReplicates:
    def test_single_bernoulli_support(self):
        # n=1, p=1, scale=1: every replicate is -0.5 or +0.5
        model = SummandModel("centered_bernoulli", n=1, p=1, scale=1.0)
        pts = sample_sum_replicates(model, 500, SEED).points
        assert set(np.unique(pts)) <= {-0.5, 0.5}

    def test_gaussian_sum_covariance_identity(self):
        # n=4, scale=1/2, identity base: sum covariance is I_p
        model = SummandModel("gaussian", n=4, p=3, scale=0.5)
        m = 20000
        pts = sample_sum_replicates(model, m, SEED).points
        emp = pts.T @ pts / m
        assert np.linalg.norm(emp - np.eye(3), 2) < 5 / math.sqrt(m)

    def test_bernoulli_variance_quarter(self):
        # Var(sum) = n * (1/4) * (1/n) = 1/4 exactly
        model = SummandModel("centered_bernoulli", n=10000, p=1)
        pts = sample_sum_replicates(model, 10000, SEED).points
        assert 0.24 <= pts.var() <= 0.26

    def test_zero_mean(self):
        model = SummandModel("rademacher", n=64, p=4)
        m = 20000
        pts = sample_sum_replicates(model, m, SEED).points
        sigma = math.sqrt(model.sum_covariance().sigma_sq_max)
        assert np.abs(pts.mean(axis=0)).max() < 5 * sigma / math.sqrt(m)

    def test_uniform_kind_variance(self):
        model = SummandModel("uniform", n=12, p=2)
        pts = sample_sum_replicates(model, 20000, SEED).points
        # per-coordinate variance: n * (1/12) * (1/n) = 1/12
        assert np.allclose(pts.var(axis=0), 1 / 12, atol=0.01)

    def test_invalid_model_rejected(self):
        with pytest.raises(ConfigError):
            SummandModel("centered_bernoulli", n=0, p=1)
        with pytest.raises(ConfigError):
            SummandModel("centered_bernoulli", n=1, p=0)
        with pytest.raises(ConfigError):
            SummandModel("poisson", n=1, p=1)

    def test_prefix_stability_in_m(self):
        # replicate j depends only on (seed, j)
        model = SummandModel("centered_bernoulli", n=30, p=2)
        small = sample_sum_replicates(model, 10, SEED).points
        large = sample_sum_replicates(model, 40, SEED).points
        assert np.array_equal(small, large[:10])


class TestSampleGaussian:
    def test_zero_covariance_zero_rows(self):
        cov = CovarianceSpec.full(np.zeros((2, 2)))
        pts = sample_gaussian(cov, 37, SEED).points
        assert np.all(pts == 0.0)

    def test_identity_correlation_near_zero(self):
        m = 100000
        pts = sample_gaussian(CovarianceSpec.identity(2), m, SEED).points
        rho = np.corrcoef(pts[:, 0], pts[:, 1])[0, 1]
        assert -0.01 <= rho <= 0.01

    def test_strong_correlation_recovered(self):
        m = 100000
        cov = CovarianceSpec.full(np.array([[1.0, 0.9], [0.9, 1.0]]))
        pts = sample_gaussian(cov, m, SEED).points
        rho = np.corrcoef(pts[:, 0], pts[:, 1])[0, 1]
        assert 0.89 <= rho <= 0.91


class TestOUInterpolate:
    def _clouds(self, m=256, p=3):
        cov = CovarianceSpec.identity(p)
        return (
            sample_gaussian(cov, m, SEED.child(0)),
            sample_gaussian(cov, m, SEED.child(1)),
        )

    def test_t_zero_is_xi_exactly(self):
        xi, gamma = self._clouds()
        out = ou_interpolate(xi, gamma, 0.0)
        assert np.array_equal(out.points, xi.points)

    def test_t_inf_is_gamma_exactly(self):
        xi, gamma = self._clouds()
        out = ou_interpolate(xi, gamma, math.inf)
        assert np.array_equal(out.points, gamma.points)

    def test_marginal_variance_preserved(self):
        m = 40000
        cov = CovarianceSpec.identity(2)
        xi = sample_gaussian(cov, m, SEED.child(2))
        gamma = sample_gaussian(cov, m, SEED.child(3))
        out = ou_interpolate(xi, gamma, 0.7).points
        emp = out.T @ out / m
        assert np.linalg.norm(emp - np.eye(2), 2) < 5 / math.sqrt(m)

    def test_shape_mismatch(self):
        xi, _ = self._clouds(m=8)
        _, gamma = self._clouds(m=9)
        with pytest.raises(DimensionError):
            ou_interpolate(xi, gamma, 1.0)

    def test_negative_t(self):
        xi, gamma = self._clouds(m=8)
        with pytest.raises(DomainError):
            ou_interpolate(xi, gamma, -0.1)


class TestCoupledSampling:
    def test_marginals_match(self):
        model = SummandModel("centered_bernoulli", n=100, p=2)
        xi, gamma = sample_sum_replicates_coupled(model, 50000, SEED)
        assert xi.points.var() == pytest.approx(0.25, abs=0.01)
        assert gamma.points.var() == pytest.approx(0.25, abs=0.01)
        # gaussian cloud is actually gaussian: check 4th moment ratio
        z = gamma.points.ravel() / gamma.points.std()
        assert np.mean(z**4) == pytest.approx(3.0, abs=0.1)

    def test_strong_positive_coupling(self):
        model = SummandModel("centered_bernoulli", n=100, p=1)
        xi, gamma = sample_sum_replicates_coupled(model, 10000, SEED)
        rho = np.corrcoef(xi.points[:, 0], gamma.points[:, 0])[0, 1]
        assert rho > 0.99

    def test_unsupported_kind(self):
        with pytest.raises(ConfigError):
            sample_sum_replicates_coupled(SummandModel("uniform", n=5, p=1), 10, SEED)


class TestPointCloud:
    def test_rejects_nan(self):
        with pytest.raises(ConfigError):
            PointCloud(np.array([[0.0, np.nan]]))

    def test_rejects_empty(self):
        with pytest.raises(ConfigError):
            PointCloud(np.zeros((0, 2)))
