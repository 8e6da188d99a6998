"""Robust estimation in kernel exponential families by smoothed total variation minimization."""

from .contamination import ContaminationSpec, GaussianDist, Mixing, PointMass, sample_huber, scenario_cov, scenario_mean
from .divergences import (
    SigmaFunction,
    StvConfig,
    WeightedSample,
    bias_bound,
    covariance_depth_ipm,
    decay_rate_check,
    mc_tv,
    mmd,
    stv_between_samples,
    stv_model_vs_samples,
    tukey_depth_ipm,
    tv_gaussian_mean,
)
from .errors import DomainError, InputError, NumericError, StateError, UnsupportedModelError
from .estimators import (
    ExactSampling,
    FitResult,
    ImportanceSampling,
    KernelFamily,
    StvLearnConfig,
    Variant,
    approx_model_expectation,
    baseline_componentwise_median,
    baseline_kendall_cov,
    baseline_sample_mean_cov,
    fit_stv,
    softmax_weights,
)
from .kernels import KernelSpec, RkhsFunction, kernel_eval, project_ball, rkhs_eval, rkhs_inner
from .models import BaseMeasure, KernelExpFamilyModel, log_density, log_partition, mc_log_partition, sample_model, to_gaussian
from .optim import GdaConfig, finite_diff_check, gda_minimax

__version__ = "0.1.0"
