import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stvlearn.contamination import (
    ContaminationSpec,
    GaussianDist,
    Mixing,
    PointMass,
    banded_covariance,
    sample_huber,
    scenario_clean,
    scenario_cov,
    scenario_mean,
)
from stvlearn.errors import InputError
from stvlearn.rng import stream


def mixture(eps, mixing=Mixing.BERNOULLI, d=2):
    return ContaminationSpec(eps, GaussianDist(np.zeros(d), np.eye(d)), PointMass(np.full(d, 50.0)), mixing)


class TestContaminationSpec:
    @pytest.mark.parametrize("eps", [-0.1, 1.1])
    def test_eps_range(self, eps):
        with pytest.raises(InputError):
            mixture(eps)

    def test_outlier_required(self):
        with pytest.raises(InputError):
            ContaminationSpec(0.1, GaussianDist([0.0], [[1.0]]))

    def test_dimension_mismatch(self):
        with pytest.raises(InputError):
            ContaminationSpec(0.1, GaussianDist([0.0], [[1.0]]), PointMass([1.0, 2.0]))

    def test_non_pd_covariance(self):
        with pytest.raises(InputError):
            GaussianDist([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])


class TestSampleHuber:
    def test_eps_zero(self, rng):
        data, labels = sample_huber(mixture(0.0), 500, rng)
        assert data.shape == (500, 2) and not labels.any()

    def test_eps_one(self, rng):
        data, labels = sample_huber(mixture(1.0), 200, rng)
        assert labels.all()
        np.testing.assert_array_equal(data, 50.0)

    def test_bernoulli_count(self, rng):
        _, labels = sample_huber(mixture(0.1), 10_000, rng)
        assert abs(labels.sum() - 1000) <= 4 * np.sqrt(10_000 * 0.1 * 0.9)

    @given(st.floats(0, 1), st.integers(0, 300))
    def test_exact_count(self, eps, n):
        _, labels = sample_huber(mixture(eps, Mixing.EXACT_COUNT), n, np.random.default_rng(0))
        assert labels.sum() == int(np.floor(eps * n + 0.5))

    def test_labels_mark_outliers(self, rng):
        data, labels = sample_huber(mixture(0.3), 1000, rng)
        np.testing.assert_array_equal(labels, np.all(data == 50.0, axis=1))

    def test_empty(self, rng):
        data, labels = sample_huber(mixture(0.5), 0, rng)
        assert data.shape == (0, 2) and labels.shape == (0,)

    def test_negative_n(self, rng):
        with pytest.raises(InputError):
            sample_huber(mixture(0.1), -1, rng)

    def test_deterministic(self):
        a, la = sample_huber(scenario_mean(3), 100, stream(7, "data"))
        b, lb = sample_huber(scenario_mean(3), 100, stream(7, "data"))
        np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(la, lb)

    def test_core_moments(self, rng):
        data, _ = sample_huber(ContaminationSpec(0.0, GaussianDist([1.0, -1.0], banded_covariance(2))), 50_000, rng)
        np.testing.assert_allclose(data.mean(0), [1.0, -1.0], atol=0.03)
        np.testing.assert_allclose(np.cov(data.T), banded_covariance(2), atol=0.03)


class TestScenarios:
    def test_mean(self):
        s = scenario_mean(2)
        assert s.eps == 0.1
        np.testing.assert_array_equal(s.outlier.mean, [5.0, 5.0])
        np.testing.assert_array_equal(s.core.cov, np.eye(2))

    def test_mean_1d(self):
        assert scenario_mean(1).outlier.mean.tolist() == [5.0]

    def test_cov(self):
        s = scenario_cov(2)
        assert s.eps == 0.2
        np.testing.assert_array_equal(s.core.cov, [[1.0, 0.5], [0.5, 1.0]])
        np.testing.assert_array_equal(s.outlier.mean, [6.0, 6.0])

    def test_cov_1d(self):
        assert scenario_cov(1).core.cov.tolist() == [[1.0]]

    def test_clean(self):
        assert scenario_clean(3).eps == 0.0

    @given(st.integers(1, 30))
    def test_banded_is_spd(self, d):
        s = banded_covariance(d)
        assert np.allclose(s, s.T) and np.linalg.eigvalsh(s).min() > 0
