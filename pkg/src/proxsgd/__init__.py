"""Implicit SGD with single-run confidence intervals for the raw iterate
(proximal Robbins-Monro) and its running average (proximal Polyak-Ruppert)."""

__version__ = "0.1.0"

from .engine import IsgdState, LearningRate, averaged_iterate, isgd_step, phi, run, step_size  # noqa: E402
from .inference import (  # noqa: E402
    CovAccumulator,
    InferenceConfig,
    accumulate,
    adjusted_hessian,
    covdiff,
    multi_run_covariance,
    normal_quantile,
    proxpr_ci,
    proxpr_sandwich,
    proxrm_ci,
    proxrm_covariance,
)
from .model import (  # noqa: E402
    CovarianceSpec,
    LinearRegression,
    LinearSample,
    QuadraticToy,
    QuarticToy,
    SmoothedQuantile,
)
from .prox import prox, prox_generic_newton  # noqa: E402
