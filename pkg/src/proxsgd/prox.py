"""Proximity operators of sampled losses, i.e. the implicit update

    theta_next = argmin_t  loss(z, t) + |t - theta|^2 / (2 gamma),

equivalently theta_next = theta - gamma * grad loss(z, theta_next).
All solvers broadcast over leading axes of ``theta``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MaxIterExceeded, NonFiniteEncountered
from .model import LinearRegression, QuadraticToy, SmoothedQuantile


@dataclass
class ProxResult:
    theta_next: np.ndarray
    residual: float
    iterations: int


def prox_quadratic_toy(z, gamma, theta):
    return (theta - gamma * z) / (1.0 + gamma)


def prox_linear_regression(y, x, gamma, theta):
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    r = np.einsum("...i,...i->...", x, theta) - y
    scale = gamma * r / (1.0 + gamma * np.einsum("...i,...i->...", x, x))
    return theta - scale[..., None] * x


def prox_smoothed_quantile(z, alpha, mu, gamma, theta):
    """Exact prox of the smoothed check loss by case analysis.

    The stationarity map t -> t - theta + gamma * grad(t) is strictly
    increasing and piecewise linear, so exactly one piece has its root inside
    its own region (the closed band wins ties at the boundaries).
    """
    z = np.asarray(z, dtype=float)
    theta = np.asarray(theta, dtype=float)
    below = theta + gamma * alpha
    above = theta - gamma * (1.0 - alpha)
    k = gamma / (2.0 * mu)
    band = (theta + gamma * alpha - k * (mu - z)) / (1.0 + k)
    in_below = below - z < -mu
    in_above = above - z > mu
    out = np.where(in_below, below, np.where(in_above, above, band))
    middle = ~(in_below | in_above)
    if np.any(middle):
        u = np.where(middle, band - z, 0.0)
        slack = 1e-9 * (mu + np.abs(z) + np.abs(theta))
        if np.any(np.abs(u) > mu + slack):
            raise AssertionError("no consistent piece in smoothed-quantile prox")
    return out


def _defect(model, z, gamma, theta, t):
    return t - theta + gamma * model.grad(z, t)


def prox_generic_newton(model, z, gamma, theta, tol=1e-12, max_iter=100):
    """Damped Newton on F(t) = t - theta + gamma * grad(z, t).

    Starts from the explicit-SGD point and halves each step (per batch
    element) until the defect norm decreases.  ``residual`` in the result is
    the largest defect norm over the batch.
    """
    theta = np.asarray(theta, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    gv = gamma[..., None]
    t = theta - gv * model.grad(z, theta)
    f = _defect(model, z, gv, theta, t)
    fn = np.linalg.norm(f, axis=-1)
    eye = np.eye(theta.shape[-1])
    for it in range(max_iter + 1):
        if not np.all(np.isfinite(fn)):
            raise NonFiniteEncountered("non-finite defect in prox solve")
        worst = float(np.max(fn))
        if worst <= tol:
            return ProxResult(t, worst, it)
        if it == max_iter:
            break
        jac = eye + gamma[..., None, None] * model.hessian(z, t)
        step = np.linalg.solve(jac, f[..., None])[..., 0]
        active = fn > tol
        lam = np.ones_like(fn)
        for _ in range(60):
            cand = t - lam[..., None] * step
            fc = _defect(model, z, gv, theta, cand)
            fcn = np.linalg.norm(fc, axis=-1)
            bad = active & ~(fcn < fn) & np.isfinite(lam)
            if not np.any(bad):
                break
            lam = np.where(bad, 0.5 * lam, lam)
        accept = active & (fcn < fn)
        t = np.where(accept[..., None], cand, t)
        f = np.where(accept[..., None], fc, f)
        fn = np.where(accept, fcn, fn)
        if not np.any(accept):
            break
    worst = float(np.max(fn))
    # an absolute tol can sit below the rounding floor of F when |t| is large
    tn = np.linalg.norm(t, axis=-1)
    hn = np.linalg.norm(model.hessian(z, t), axis=(-2, -1))
    scale = tn + np.linalg.norm(theta, axis=-1) + gamma * (np.linalg.norm(model.grad(z, t), axis=-1) + hn * tn)
    floor = float(np.max(64 * np.finfo(float).eps * scale))
    if worst <= max(tol, floor):
        return ProxResult(t, worst, it)
    raise MaxIterExceeded(f"prox defect {worst:.3e} above tol {tol:.1e}", best=t, residual=worst)


def prox(model, z, gamma, theta, tol=1e-12, max_iter=100):
    """Dispatch to the closed-form solver when the loss has one."""
    if isinstance(model, QuadraticToy):
        return prox_quadratic_toy(np.asarray(z, dtype=float)[..., None], gamma, np.asarray(theta, dtype=float))
    if isinstance(model, LinearRegression):
        y, x = z
        return prox_linear_regression(y, x, gamma, theta)
    if isinstance(model, SmoothedQuantile):
        return prox_smoothed_quantile(np.asarray(z, dtype=float)[..., None], model.alpha, model.mu, gamma,
                                      np.asarray(theta, dtype=float))
    return prox_generic_newton(model, z, gamma, theta, tol=tol, max_iter=max_iter).theta_next


def defect_norm(model, z, gamma, theta, theta_next):
    gv = np.asarray(gamma, dtype=float)[..., None]
    return np.linalg.norm(_defect(model, z, gv, theta, theta_next), axis=-1)
