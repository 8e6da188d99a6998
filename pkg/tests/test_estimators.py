import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import integrate
from scipy.stats import norm

from stvlearn.contamination import sample_huber, scenario_clean, scenario_mean
from stvlearn.errors import DegenerateScaleError, InputError, NumericError
from stvlearn.estimators import (
    ExactSampling,
    GaussianCovFamily,
    ImportanceSampling,
    KernelFamily,
    StvLearnConfig,
    Variant,
    approx_model_expectation,
    baseline_componentwise_median,
    baseline_kendall_cov,
    baseline_sample_mean_cov,
    family_from_name,
    fit_stv,
    kendall_tau_matrix,
    softmax_weights,
)
from stvlearn.kernels import KernelSpec, RkhsFunction
from stvlearn.optim import GdaConfig
from stvlearn.rng import stream
from stvlearn.verify import gradient_errors, importance_vs_exact

LIN1 = KernelSpec.linear(1)
SHORT = GdaConfig(outer_steps=150, warmup=50, restarts=1)


class TestStvLearnConfig:
    def test_warns_when_u_small(self):
        with pytest.warns(UserWarning, match="2r"):
            StvLearnConfig(r=10.0, U=5.0)

    def test_no_warning_in_regime(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            StvLearnConfig(r=1.0, U=2.0)

    @pytest.mark.parametrize("r,U", [(0.0, 1.0), (1.0, -1.0)])
    def test_positive(self, r, U):
        with pytest.raises(InputError):
            StvLearnConfig(r=r, U=U)

    def test_from_penalties(self):
        cfg = StvLearnConfig.from_penalties(1e-4, 1e-4)
        assert cfg.r == pytest.approx(100.0) and cfg.U == pytest.approx(100.0)
        assert cfg.lam_f == pytest.approx(1e-4) and cfg.lam_u == pytest.approx(1e-4)

    def test_penalties_per_variant(self):
        assert StvLearnConfig(variant=Variant.HARD, r=1, U=2).lam_f == 0.0
        assert StvLearnConfig(variant=Variant.ADDITIVE, r=1, U=2).lam_u == 0.0

    def test_family_names(self):
        assert family_from_name("cov", 3) == GaussianCovFamily(3)
        with pytest.raises(InputError):
            family_from_name("rbf", 3)


class TestSoftmaxWeights:
    def test_uniform(self):
        w = softmax_weights(RkhsFunction.zero(LIN1), np.arange(5.0)[:, None], np.zeros(5))
        np.testing.assert_allclose(w, 0.2)

    def test_two_logits(self):
        f = RkhsFunction.explicit(LIN1, [np.log(3)])
        np.testing.assert_allclose(softmax_weights(f, [[0.0], [1.0]], [0.0, 0.0]), [0.25, 0.75])

    def test_log_q_enters_negatively(self):
        w = softmax_weights(RkhsFunction.zero(LIN1), [[0.0], [0.0]], [0.0, -np.log(3)])
        np.testing.assert_allclose(w, [0.25, 0.75])

    @given(arrays(np.float64, 6, elements=st.floats(-50, 50)), st.floats(-100, 100))
    def test_shift_invariance(self, z, c):
        k = KernelSpec.quadratic(1)
        Z = z[:, None]
        f = RkhsFunction.explicit(k, [[-0.2]])
        lq = np.zeros(6)
        w1 = softmax_weights(f, Z, lq)
        w2 = softmax_weights(f, Z, lq - c)  # same as adding c to every logit
        np.testing.assert_allclose(w1, w2, rtol=1e-10, atol=1e-300)
        assert w1.sum() == pytest.approx(1.0) and np.all(w1 >= 0)

    def test_extreme_logits_stable(self):
        f = RkhsFunction.explicit(LIN1, [1.0])
        w = softmax_weights(f, [[1000.0], [999.0]], [0.0, 0.0])
        np.testing.assert_allclose(w, [1 / (1 + np.exp(-1)), np.exp(-1) / (1 + np.exp(-1))])

    def test_non_finite_names_index(self):
        with pytest.raises(NumericError, match="index 2"):
            softmax_weights(RkhsFunction.zero(LIN1), np.zeros((3, 1)), [0.0, 0.0, np.inf])


class TestApproxModelExpectation:
    def test_constant_argument(self, rng):
        Z = rng.standard_normal((10, 1))
        zero = RkhsFunction.zero(LIN1)
        assert approx_model_expectation(zero, zero, 0.0, Z, np.zeros(10)) == pytest.approx(0.5, abs=1e-15)

    def test_plain_average(self, rng):
        Z = rng.standard_normal((50, 1))
        u = RkhsFunction.explicit(LIN1, [2.0])
        val = approx_model_expectation(RkhsFunction.zero(LIN1), u, 0.3, Z, np.zeros(50))
        assert val == pytest.approx(np.mean(1 / (1 + np.exp(-(2 * Z[:, 0] - 0.3)))))

    def test_tilted_mean_model(self, rng):
        ell = 100_000
        Z = rng.standard_normal((ell, 1))
        f = RkhsFunction.explicit(LIN1, [1.0])
        est, se = approx_model_expectation(f, RkhsFunction.explicit(LIN1, [1.0]), 0.0, Z, np.zeros(ell), return_stderr=True)
        oracle, _ = integrate.quad(lambda x: norm.pdf(x, 1.0) * 0.5 * (1 + np.tanh(x / 2)), -np.inf, np.inf)
        # bootstrap standard error of the self-normalized estimate
        boot = []
        for _ in range(100):
            idx = rng.integers(0, ell, ell)
            boot.append(approx_model_expectation(f, RkhsFunction.explicit(LIN1, [1.0]), 0.0, Z[idx], np.zeros(ell)))
        assert abs(est - oracle) <= 3 * np.std(boot)
        assert se == pytest.approx(np.std(boot), rel=0.3)

    def test_importance_agrees_with_exact(self):
        rows = importance_vs_exact(reps=5, ell=100_000, seed=3, d=3)
        for a, sa, c, sc in rows:
            assert abs(a - c) <= 3 * np.hypot(sa, sc)


class TestGradients:
    def test_finite_differences(self):
        errs = gradient_errors(points=20, seed=11)
        assert max(errs) < 1e-4

    def test_kernel_family(self, rng):
        from stvlearn.estimators import make_objective
        from stvlearn.optim import finite_diff_check
        cfg = StvLearnConfig(r=2.0, U=5.0, model_expectation=ImportanceSampling(200))
        data = rng.standard_normal((40, 2))
        obj = make_objective(data, KernelFamily(KernelSpec.rbf(2, 1.0)), cfg, rng)
        x = 0.1 * rng.standard_normal(obj.param.size)
        y = rng.standard_normal(obj.space.size + 1)
        assert finite_diff_check(lambda p: obj(p, y)[:2], x, 1e-5) < 1e-4
        assert finite_diff_check(lambda q: (lambda v: (v[0], v[2]))(obj(x, q)), y, 1e-5) < 1e-4


class TestFitStv:
    def test_empty_data(self, rng):
        with pytest.raises(InputError):
            fit_stv(np.zeros((0, 2)), "mean", StvLearnConfig(), rng)

    def test_non_finite_data(self, rng):
        with pytest.raises(InputError):
            fit_stv(np.array([[0.0], [np.nan]]), "mean", StvLearnConfig(), rng)

    def test_kernel_family_needs_importance(self, rng):
        with pytest.raises(InputError):
            fit_stv(rng.standard_normal((10, 1)), KernelFamily(LIN1), StvLearnConfig(), rng)

    def test_clean_1d(self):
        data, _ = sample_huber(scenario_clean(1), 4000, stream(1, "data"))
        res = fit_stv(data, "mean", StvLearnConfig(), stream(1, "fit"))
        assert abs(res.mean[0]) <= 0.15
        assert np.all(np.isfinite(res.objective_trace))

    def test_contaminated_mean_beats_sample_mean(self):
        data, _ = sample_huber(scenario_mean(2), 1000, stream(2, "data"))
        res = fit_stv(data, "mean", StvLearnConfig(optimizer=GdaConfig(restarts=1)), stream(2, "fit"))
        assert np.linalg.norm(res.mean) < 0.5 * np.linalg.norm(data.mean(0))

    def test_hard_constraint(self, rng):
        data = rng.standard_normal((300, 2)) + 4.0
        cfg = StvLearnConfig(variant=Variant.HARD, r=1.0, U=2.0, optimizer=SHORT)
        res = fit_stv(data, "mean", cfg, rng)
        assert res.f_hat.norm() <= 1.0 + 1e-9
        assert res.witness[0].norm() <= 2.0 + 1e-9

    def test_hard_constraint_cov(self, rng):
        data = 3.0 * rng.standard_normal((300, 2))
        cfg = StvLearnConfig(variant=Variant.HARD, r=0.4, U=2.0, optimizer=SHORT)
        res = fit_stv(data, "cov", cfg, rng)
        assert res.f_hat.norm() <= 0.4 + 1e-9
        assert np.linalg.eigvalsh(res.covariance).min() > 0

    def test_translation_equivariance(self):
        rng0 = stream(5, "data")
        data = rng0.standard_normal((200, 2))
        t = np.array([3.0, -1.5])
        cfg = StvLearnConfig(variant=Variant.HARD, r=1e6, U=1e7, optimizer=SHORT)
        a = fit_stv(data, "mean", cfg, stream(5, "fit"), f_init=np.zeros(2))
        b = fit_stv(data + t, "mean", cfg, stream(5, "fit"), f_init=t)
        np.testing.assert_allclose(b.mean, a.mean + t, atol=1e-8)

    def test_best_so_far_non_increasing(self, rng):
        data = rng.standard_normal((200, 1))
        res = fit_stv(data, "mean", StvLearnConfig(optimizer=SHORT.with_(checkpoint_every=10)), rng)
        ema, best, checkpoints = None, np.inf, []
        for t, v in enumerate(res.objective_trace, start=1):
            ema = v if ema is None else 0.9 * ema + 0.1 * v
            if t > SHORT.warmup and t % 10 == 0:
                best = min(best, ema)
                checkpoints.append(best)
        assert np.all(np.diff(checkpoints) <= 1e-6)

    def test_deterministic(self, rng):
        data = rng.standard_normal((100, 2))
        cfg = StvLearnConfig(optimizer=SHORT)
        a = fit_stv(data, "mean", cfg, stream(9, "fit"))
        b = fit_stv(data, "mean", cfg, stream(9, "fit"))
        np.testing.assert_array_equal(a.params, b.params)
        np.testing.assert_array_equal(a.objective_trace, b.objective_trace)

    def test_importance_sampling_fit(self, rng):
        data = rng.standard_normal((500, 1)) + 0.5
        cfg = StvLearnConfig(model_expectation=ImportanceSampling(5000), optimizer=GdaConfig(restarts=1))
        res = fit_stv(data, "mean", cfg, rng)
        assert abs(res.mean[0] - 0.5) < 0.2
        assert res.diagnostics["max_weight"] < 0.01

    def test_diagnostics(self, rng):
        data = rng.standard_normal((100, 1))
        res = fit_stv(data, "mean", StvLearnConfig(optimizer=SHORT.with_(restarts=2)), rng)
        d = res.diagnostics
        assert len(d["restart_scores"]) == 2 and d["chosen_restart"] in (0, 1)
        assert d["wall_ms"] > 0 and not d["truncated"]


class TestBaselines:
    def test_median(self):
        np.testing.assert_array_equal(baseline_componentwise_median([[1, 2], [3, 4], [100, 5]]), [3, 4])

    def test_median_even(self):
        np.testing.assert_array_equal(baseline_componentwise_median([[1], [3]]), [2])

    def test_median_empty(self):
        with pytest.raises(InputError):
            baseline_componentwise_median(np.zeros((0, 2)))

    def test_median_contaminated(self):
        errs = []
        for trial in range(10):
            data, _ = sample_huber(scenario_mean(10), 1000, stream(trial, "median"))
            errs.append(np.linalg.norm(baseline_componentwise_median(data)))
        assert abs(np.mean(errs) - 0.44) <= 0.15

    def test_sample_mean_cov(self):
        mu, cov = baseline_sample_mean_cov([[0.0], [2.0]])
        assert mu.tolist() == [1.0] and cov.tolist() == [[2.0]]

    def test_sample_needs_two(self):
        with pytest.raises(InputError):
            baseline_sample_mean_cov([[1.0, 2.0]])

    def test_sample_mean_breaks_down(self):
        data, _ = sample_huber(scenario_mean(10), 100_000, stream(0, "mean"))
        assert np.linalg.norm(data.mean(0)) == pytest.approx(0.5 * np.sqrt(10), abs=0.05)

    def test_sample_cov_clean(self, rng):
        _, cov = baseline_sample_mean_cov(rng.standard_normal((10_000, 3)))
        assert np.linalg.norm(cov - np.eye(3)) < 0.1

    def test_kendall_monotone(self, rng):
        x = rng.standard_normal(100)
        data = np.column_stack([x, x**3])
        assert kendall_tau_matrix(data)[0, 1] == pytest.approx(1.0)
        cov = baseline_kendall_cov(data)
        corr = cov[0, 1] / np.sqrt(cov[0, 0] * cov[1, 1])
        assert corr == pytest.approx(1.0)

    def test_kendall_brute_force(self, rng):
        data = rng.integers(0, 4, (30, 3)).astype(float)  # ties present
        tau = kendall_tau_matrix(data)
        n = len(data)
        for a in range(3):
            for b in range(3):
                s = sum(np.sign(data[i, a] - data[j, a]) * np.sign(data[i, b] - data[j, b])
                        for i in range(n) for j in range(i + 1, n))
                assert tau[a, b] == pytest.approx(s / (n * (n - 1) / 2))

    def test_kendall_independent(self, rng):
        cov = baseline_kendall_cov(rng.standard_normal((10_000, 3)))
        off = cov[~np.eye(3, dtype=bool)]
        assert np.all(np.abs(off) < 0.05)
        np.testing.assert_allclose(cov, cov.T)

    def test_kendall_degenerate(self):
        with pytest.raises(DegenerateScaleError):
            baseline_kendall_cov(np.tile([1.0, 2.0], (10, 1)))
