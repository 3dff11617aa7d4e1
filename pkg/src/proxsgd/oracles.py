"""Reference computations that share no code path with the solvers they check.

The prox oracle is a golden-section search on the prox objective carried out
in 40-digit arithmetic, so its accuracy is not capped near sqrt(machine
epsilon) the way a double-precision golden search is.
"""

from __future__ import annotations

import math

import mpmath
import numpy as np

from .model import LinearRegression, QuadraticToy, QuarticToy, SmoothedQuantile

_DPS = 40
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_argmin(f, start=0.0, step=1.0, rtol=1e-14, max_iter=500):
    """Minimize a univariate convex ``f`` (taking mpmath numbers).

    A downhill expansion from ``start`` finds a bracket, then golden-section
    search shrinks it below ``rtol * (1 + |x|)``.
    """
    with mpmath.workdps(_DPS):
        a = mpmath.mpf(start)
        b = a + mpmath.mpf(step)
        fa, fb = f(a), f(b)
        if fb > fa:
            a, b, fa, fb = b, a, fb, fa
        grow = mpmath.mpf(1) / _INV_PHI
        c = b + grow * (b - a)
        fc = f(c)
        for _ in range(max_iter):
            if fc > fb:
                break
            a, b, fa, fb = b, c, fb, fc
            c = b + grow * (b - a)
            fc = f(c)
        lo, hi = (a, c) if a < c else (c, a)
        r = mpmath.mpf(_INV_PHI)
        x1 = hi - r * (hi - lo)
        x2 = lo + r * (hi - lo)
        f1, f2 = f(x1), f(x2)
        for _ in range(max_iter):
            if hi - lo <= rtol * (1 + abs(lo) + abs(hi)):
                break
            if f1 <= f2:
                hi, x2, f2 = x2, x1, f1
                x1 = hi - r * (hi - lo)
                f1 = f(x1)
            else:
                lo, x1, f1 = x1, x2, f2
                x2 = lo + r * (hi - lo)
                f2 = f(x2)
        return float((lo + hi) / 2)


def _mp(v):
    return mpmath.mpf(float(v))


def _smoothed_check(u, alpha, mu):
    if u > mu:
        s = u
    elif u < -mu:
        s = mpmath.mpf(0)
    else:
        s = (u + mu) ** 2 / (4 * mu)
    return s - alpha * u


def prox_oracle(model, z, gamma, theta):
    """argmin_t loss(z, t) + |t - theta|^2 / (2 gamma) by golden section."""
    theta = np.asarray(theta, dtype=float)
    g = _mp(gamma)
    if isinstance(model, LinearRegression):
        y, x = z
        x = np.asarray(x, dtype=float)
        xx = float(x @ x)
        if xx == 0.0:
            return theta.copy()
        # the minimizer lies on the line theta - s x
        with mpmath.workdps(_DPS):
            r0 = _mp(float(y)) - _mp(float(x @ theta))
            xxm = _mp(xx)

            def h(s):
                return (r0 + s * xxm) ** 2 / 2 + s * s * xxm / (2 * g)

            s = golden_section_argmin(h, 0.0, 1.0 / (1.0 + xx))
        return theta - s * x
    t0 = _mp(theta[0])
    zm = _mp(z)
    if isinstance(model, QuadraticToy):
        def h(t):
            return t * t / 2 + zm * t + (t - t0) ** 2 / (2 * g)
    elif isinstance(model, QuarticToy):
        def h(t):
            return t**4 / 4 + zm * t + (t - t0) ** 2 / (2 * g)
    elif isinstance(model, SmoothedQuantile):
        al, mu = _mp(model.alpha), _mp(model.mu)

        def h(t):
            return _smoothed_check(t - zm, al, mu) + (t - t0) ** 2 / (2 * g)
    else:
        raise TypeError(f"no oracle for {type(model).__name__}")
    scale = max(1e-3, min(1.0, float(gamma)))
    return np.array([golden_section_argmin(h, float(theta[0]), scale)])


def normal_cdf(x):
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def normal_quantile_bisect(q, lo=-40.0, hi=40.0):
    """Inverse normal CDF by bisection on erfc, for checking fast routines.

    Above the median the comparison uses the upper tail, which stays
    accurate where the CDF itself rounds to 1.
    """
    tail = 1.0 - q
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        below = 0.5 * math.erfc(mid / math.sqrt(2.0)) > tail if q > 0.5 else normal_cdf(mid) < q
        if below:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, abs(mid)):
            break
    return 0.5 * (lo + hi)


def central_difference(f, x, d, h=1e-6):
    """Directional derivative of ``f`` at ``x`` along ``d``."""
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    return (f(x + h * d) - f(x - h * d)) / (2.0 * h)
