"""Single-run plug-in covariance estimates and Wald intervals for the raw
implicit-SGD iterate and its running average.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CovarianceIllPosed, DimensionMismatch, InsufficientRuns, RegimeUnsupported
from .linalg import frobenius, lyapunov_inverse_eig, sym_eig


@dataclass
class CovAccumulator:
    """Running sums of sample Hessians and gradient outer products, both
    evaluated at the iterate *before* the step that consumed the sample.

    Arrays may carry leading batch axes (one accumulator per replication).
    """

    H_sum: np.ndarray
    I_sum: np.ndarray
    count: int = 0

    @classmethod
    def empty(cls, dim, batch=()):
        shape = tuple(batch) + (dim, dim)
        return cls(np.zeros(shape), np.zeros(shape), 0)

    @property
    def H_hat(self):
        return self.H_sum / self.count

    @property
    def I_hat(self):
        return self.I_sum / self.count

    def add_chunk(self, model, samples, theta_pre):
        """In-place update with a chunk of samples stacked on axis 0."""
        g = model.grad(samples, theta_pre)
        if g.shape[-1] != self.H_sum.shape[-1]:
            raise DimensionMismatch("gradient length does not match accumulator")
        gt = np.moveaxis(g, 0, -1)
        self.I_sum += gt @ np.swapaxes(gt, -1, -2)
        self.H_sum += model.hessian_sum(samples, theta_pre)
        self.count += g.shape[0]
        return self

    def select(self, index):
        return CovAccumulator(self.H_sum[index], self.I_sum[index], self.count)


def accumulate(acc: CovAccumulator, model, z, theta_pre):
    g = np.asarray(model.grad(z, theta_pre), dtype=float)
    if g.shape[-1] != acc.H_sum.shape[-1]:
        raise DimensionMismatch("gradient length does not match accumulator")
    h = model.hessian(z, theta_pre)
    return CovAccumulator(acc.H_sum + h, acc.I_sum + np.einsum("...i,...j->...ij", g, g), acc.count + 1)


class CovarianceSink:
    """Engine sink feeding post-burn-in samples into a ``CovAccumulator``."""

    post_burn_in_only = True

    def __init__(self, model, acc: CovAccumulator):
        self.model = model
        self.acc = acc

    def consume(self, first_step, samples, theta_pre, theta_post):
        self.acc.add_chunk(self.model, samples, theta_pre)


@dataclass(frozen=True)
class InferenceConfig:
    gamma1: float
    exponent: float
    delta: float | None = None
    alpha: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("CI level alpha must lie in (0, 1)")
        if self.delta is None:
            object.__setattr__(self, "delta", default_delta(self.gamma1, self.exponent))
        if self.delta <= 0:
            raise ValueError("eigenvalue floor must be positive")


def default_delta(gamma1, exponent):
    if exponent == 1.0:
        return 1.0 / (2.0 * gamma1) + 0.01
    return 0.01


def adjusted_hessian(acc_or_h, delta):
    """Floor the eigenvalues of H_hat at ``delta``."""
    h = acc_or_h.H_hat if isinstance(acc_or_h, CovAccumulator) else np.asarray(acc_or_h, dtype=float)
    d, v = sym_eig(h)
    return (v * np.maximum(d, delta)) @ v.T


def proxrm_covariance(acc: CovAccumulator, cfg: InferenceConfig, h_tilde=None):
    """gamma1^2 times the inverse Lyapunov map of I_hat against 2 gamma1 H~ - beta I,
    with beta = 1 for exponent 1 and 0 for exponents in (1/2, 1).
    """
    if acc.count <= 0:
        raise CovarianceIllPosed("no samples accumulated")
    if h_tilde is None:
        h_tilde = adjusted_hessian(acc, cfg.delta)
    p = h_tilde.shape[0]
    b = cfg.gamma1 * h_tilde
    if cfg.exponent == 1.0:
        lam = sym_eig(h_tilde)[0][0]
        if 2.0 * cfg.gamma1 * lam <= 1.0:
            raise CovarianceIllPosed(
                f"2*gamma1*lambda_min(H~) = {2 * cfg.gamma1 * lam:.4g} <= 1; increase gamma1 or delta")
        b = b - 0.5 * np.eye(p)
    return cfg.gamma1**2 * lyapunov_inverse_eig(b, acc.I_hat)


def _rate_exponent(exponent):
    return 1.0 if exponent == 1.0 else exponent


def proxrm_ci(theta_n, acc, cfg: InferenceConfig, n, sigma=None):
    """Per-coordinate intervals theta_n +- z * n^(-gamma/2) * sqrt(Sigma_jj).

    Returns an array of shape ``(p, 2)``.
    """
    if sigma is None:
        sigma = proxrm_covariance(acc, cfg)
    half = normal_quantile(1.0 - cfg.alpha / 2.0) * n ** (-_rate_exponent(cfg.exponent) / 2.0)
    half = half * np.sqrt(np.maximum(np.diag(sigma), 0.0))
    theta_n = np.asarray(theta_n, dtype=float)
    return np.stack([theta_n - half, theta_n + half], axis=-1)


def proxpr_sandwich(acc_or_h, delta=None, i_hat=None):
    """H~^-1 I_hat H~^-1 through the eigendecomposition of H~.

    Accepts an accumulator (flooring at ``delta``) or an already-floored H~
    together with ``i_hat``.
    """
    if isinstance(acc_or_h, CovAccumulator):
        h_tilde = adjusted_hessian(acc_or_h, delta)
        i_hat = acc_or_h.I_hat
    else:
        h_tilde = np.asarray(acc_or_h, dtype=float)
    d, v = sym_eig(h_tilde)
    w = v / d
    s = w @ (v.T @ i_hat @ v) @ w.T
    return 0.5 * (s + s.T)


def check_proxpr_regime(exponent):
    if not 0.5 < exponent < 1.0:
        raise RegimeUnsupported(f"averaged-iterate intervals need exponent in (1/2, 1), got {exponent}")


def proxpr_ci(theta_bar, acc, cfg: InferenceConfig, n_effective, sandwich=None, enforce_regime=True):
    """theta_bar +- z * sqrt(sandwich_jj / n_effective), shape ``(p, 2)``."""
    if enforce_regime:
        check_proxpr_regime(cfg.exponent)
    if sandwich is None:
        sandwich = proxpr_sandwich(acc, cfg.delta)
    half = normal_quantile(1.0 - cfg.alpha / 2.0) * np.sqrt(np.maximum(np.diag(sandwich), 0.0) / n_effective)
    theta_bar = np.asarray(theta_bar, dtype=float)
    return np.stack([theta_bar - half, theta_bar + half], axis=-1)


def multi_run_covariance(estimates):
    """Across-run covariance about the across-run mean, divisor B."""
    est = np.asarray(estimates, dtype=float)
    if est.ndim == 1:
        est = est[:, None]
    if est.shape[0] < 2:
        raise InsufficientRuns(f"need at least 2 runs, got {est.shape[0]}")
    dev = est - est.mean(axis=0)
    return dev.T @ dev / est.shape[0]


def covdiff(plug_in, multi_run, p=None):
    """Frobenius distance divided by the dimension.  Both matrices must be on
    the same scale (rescale the plug-in by its rate factor first)."""
    a = np.atleast_2d(np.asarray(plug_in, dtype=float))
    b = np.atleast_2d(np.asarray(multi_run, dtype=float))
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes {a.shape} and {b.shape} differ")
    return frobenius(a - b) / (a.shape[0] if p is None else p)


# Acklam's rational approximation to the normal quantile
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00, 3.754408661907416e00)
_P_LOW = 0.02425


def normal_quantile(q):
    """Inverse standard-normal CDF, refined by one Halley step."""
    if not 0.0 < q < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {q}")
    if q < _P_LOW:
        r = math.sqrt(-2.0 * math.log(q))
        x = (((((_C[0] * r + _C[1]) * r + _C[2]) * r + _C[3]) * r + _C[4]) * r + _C[5]) / \
            ((((_D[0] * r + _D[1]) * r + _D[2]) * r + _D[3]) * r + 1.0)
    elif q <= 1.0 - _P_LOW:
        r = q - 0.5
        s = r * r
        x = (((((_A[0] * s + _A[1]) * s + _A[2]) * s + _A[3]) * s + _A[4]) * s + _A[5]) * r / \
            (((((_B[0] * s + _B[1]) * s + _B[2]) * s + _B[3]) * s + _B[4]) * s + 1.0)
    else:
        r = math.sqrt(-2.0 * math.log1p(-q))
        x = -(((((_C[0] * r + _C[1]) * r + _C[2]) * r + _C[3]) * r + _C[4]) * r + _C[5]) / \
            ((((_D[0] * r + _D[1]) * r + _D[2]) * r + _D[3]) * r + 1.0)
    if q > 0.5:
        e = (1.0 - q) - 0.5 * math.erfc(x / math.sqrt(2.0))
    else:
        e = 0.5 * math.erfc(-x / math.sqrt(2.0)) - q
    u = e * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)
