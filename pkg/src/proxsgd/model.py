"""Sample-loss oracles and the synthetic data streams used in the experiments.

Every loss broadcasts over leading axes: ``theta`` has shape ``(..., p)`` and
the sample arrays carry the same leading shape.  Linear-regression samples are
``LinearSample(y, x)`` with ``y`` of shape ``(...)`` and ``x`` of shape
``(..., p)``; the scalar losses take ``z`` of shape ``(...)`` and work on
``p = 1`` parameters.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Union

import numpy as np

from .errors import DimensionMismatch


class LinearSample(NamedTuple):
    y: np.ndarray
    x: np.ndarray


Sample = Union[LinearSample, float, np.ndarray]


def _check_dim(theta, dim):
    theta = np.asarray(theta, dtype=float)
    if theta.ndim == 0 or theta.shape[-1] != dim:
        raise DimensionMismatch(f"expected parameter of length {dim}, got shape {theta.shape}")
    return theta


@dataclass(frozen=True)
class LinearRegression:
    """Squared-error loss 0.5 * (y - x'theta)^2."""

    dim: int

    has_closed_form_prox = True

    def _unpack(self, z):
        y, x = z
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise DimensionMismatch(f"covariate length {x.shape[-1]} != {self.dim}")
        return np.asarray(y, dtype=float), x

    def value(self, z, theta):
        theta = _check_dim(theta, self.dim)
        y, x = self._unpack(z)
        r = y - np.einsum("...i,...i->...", x, theta)
        return 0.5 * r * r

    def grad(self, z, theta):
        theta = _check_dim(theta, self.dim)
        y, x = self._unpack(z)
        r = np.einsum("...i,...i->...", x, theta) - y
        return r[..., None] * x

    def hessian(self, z, theta):
        theta = _check_dim(theta, self.dim)
        _, x = self._unpack(z)
        h = x[..., :, None] * x[..., None, :]
        return np.broadcast_to(h, np.broadcast_shapes(h.shape, theta.shape[:-1] + h.shape[-2:])).copy()

    def hessian_sum(self, z, theta):
        # x x' does not depend on theta; sum over axis 0 with one batched matmul
        _, x = self._unpack(z)
        xt = np.moveaxis(x, 0, -1)
        return xt @ np.swapaxes(xt, -1, -2)


class _ScalarLoss:
    dim = 1

    def _t(self, theta):
        return _check_dim(theta, 1)[..., 0]

    def value(self, z, theta):
        return self._value(np.asarray(z, dtype=float), self._t(theta))

    def grad(self, z, theta):
        return self._grad(np.asarray(z, dtype=float), self._t(theta))[..., None]

    def hessian(self, z, theta):
        return self._hess(np.asarray(z, dtype=float), self._t(theta))[..., None, None]

    def hessian_sum(self, z, theta):
        return self.hessian(z, theta).sum(axis=0)


@dataclass(frozen=True)
class QuadraticToy(_ScalarLoss):
    """0.5 * theta^2 + z * theta; expected risk 0.5 * theta^2 when E[z] = 0."""

    has_closed_form_prox = True

    def _value(self, z, t):
        return 0.5 * t * t + z * t

    def _grad(self, z, t):
        return t + z

    def _hess(self, z, t):
        return np.ones(np.broadcast_shapes(np.shape(z), np.shape(t)))

    def risk(self, theta):
        t = np.asarray(theta, dtype=float)[..., 0]
        return 0.5 * t * t


@dataclass(frozen=True)
class QuarticToy(_ScalarLoss):
    """0.25 * theta^4 + z * theta; not strongly convex at the minimizer 0."""

    has_closed_form_prox = False

    def _value(self, z, t):
        return 0.25 * t**4 + z * t

    def _grad(self, z, t):
        return t**3 + z

    def _hess(self, z, t):
        return np.broadcast_to(3.0 * t * t, np.broadcast_shapes(np.shape(z), np.shape(t))).copy()

    def risk(self, theta):
        t = np.asarray(theta, dtype=float)[..., 0]
        return 0.25 * t**4


@dataclass(frozen=True)
class SmoothedQuantile(_ScalarLoss):
    """Check loss max(0, u) - alpha * u with u = theta - z, where max(0, u)
    is replaced by (u + mu)^2 / (4 mu) on the closed band [-mu, mu].
    """

    alpha: float
    mu: float

    has_closed_form_prox = True

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.mu <= 0.0:
            raise ValueError(f"mu must be positive, got {self.mu}")

    def _value(self, z, t):
        u = t - z
        mu = self.mu
        s = np.where(u > mu, u, np.where(u < -mu, 0.0, (u + mu) ** 2 / (4.0 * mu)))
        return s - self.alpha * u

    def _grad(self, z, t):
        u = t - z
        mu = self.mu
        ds = np.where(u > mu, 1.0, np.where(u < -mu, 0.0, (u + mu) / (2.0 * mu)))
        return ds - self.alpha

    def _hess(self, z, t):
        u = t - z
        return np.where(np.abs(u) <= self.mu, 1.0 / (2.0 * self.mu), 0.0)


LossModel = Union[LinearRegression, QuadraticToy, QuarticToy, SmoothedQuantile]


def loss_value(model, z, theta):
    return model.value(z, theta)


def loss_grad(model, z, theta):
    return model.grad(z, theta)


def loss_hessian(model, z, theta):
    return model.hessian(z, theta)


@dataclass(frozen=True)
class CovarianceSpec:
    """Design covariance for the regression covariates.

    ``kind`` is ``"identity"``, ``"toeplitz"`` (entries rho^|i-j|) or
    ``"equicorr"`` (rho off the diagonal).  ``rho`` defaults to 0.5 and 0.2
    respectively.
    """

    kind: str
    dim: int
    rho: float | None = None

    def __post_init__(self):
        if self.kind not in ("identity", "toeplitz", "equicorr"):
            raise ValueError(f"unknown covariance kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError("dimension must be positive")
        if self.rho is None:
            object.__setattr__(self, "rho", {"identity": 0.0, "toeplitz": 0.5, "equicorr": 0.2}[self.kind])

    def matrix(self):
        p = self.dim
        if self.kind == "identity":
            return np.eye(p)
        if self.kind == "toeplitz":
            idx = np.arange(p)
            return self.rho ** np.abs(idx[:, None] - idx[None, :])
        m = np.full((p, p), self.rho)
        np.fill_diagonal(m, 1.0)
        return m

    @cached_property
    def cholesky(self):
        return np.linalg.cholesky(self.matrix())


class LinearRegressionStream:
    """Draws (y, x) with x ~ N(0, Sigma) and y = x'theta_star + N(0, 1).

    Each sample consumes p + 1 standard normals from the generator: the p
    covariate innovations first, then the noise.
    """

    def __init__(self, cov: CovarianceSpec, theta_star):
        self.cov = cov
        self.theta_star = np.asarray(theta_star, dtype=float)
        if self.theta_star.shape != (cov.dim,):
            raise DimensionMismatch(f"theta_star has shape {self.theta_star.shape}, design has dim {cov.dim}")
        self._chol = cov.cholesky

    @property
    def dim(self):
        return self.cov.dim

    def draw(self, rng, size):
        p = self.cov.dim
        u = rng.standard_normal((size, p + 1))
        if self.cov.kind == "identity":
            x = u[:, :p].copy()
        else:
            x = u[:, :p] @ self._chol.T
        y = x @ self.theta_star + u[:, p]
        return LinearSample(y, x)


class ScalarNormalStream:
    """Scalar draws scale * N(0, 1); scale 0 yields a noise-free stream."""

    def __init__(self, scale=1.0):
        self.scale = float(scale)

    dim = 1

    def draw(self, rng, size):
        return self.scale * rng.standard_normal(size)


def quantile_stream():
    return ScalarNormalStream(1.0)


def toy_stream(sigma=4.0):
    return ScalarNormalStream(sigma)


def gen_linear_sample(spec: CovarianceSpec, theta_star, rng):
    s = LinearRegressionStream(spec, theta_star).draw(rng, 1)
    return LinearSample(float(s.y[0]), s.x[0])


def gen_scalar_sample(stream: ScalarNormalStream, rng):
    return float(stream.draw(rng, 1)[0])


def take(samples, index):
    """Index the leading axis of a sample batch of either layout."""
    if isinstance(samples, LinearSample):
        return LinearSample(samples.y[index], samples.x[index])
    return samples[index]


def stack(batches, axis=1):
    """Stack per-replication sample batches along a new axis."""
    if isinstance(batches[0], LinearSample):
        return LinearSample(np.stack([b.y for b in batches], axis=axis), np.stack([b.x for b in batches], axis=axis))
    return np.stack(batches, axis=axis)
