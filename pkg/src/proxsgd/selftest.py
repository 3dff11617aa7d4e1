"""Property suites run by ``proxsgd selftest``: prox solvers against the
golden-section oracle, the two Lyapunov routes, the implicit-step norm
inequality, derivative consistency, and eigenvalue flooring."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .inference import adjusted_hessian
from .linalg import lyapunov_inverse_eig, lyapunov_inverse_kron, sym_eig
from .model import LinearRegression, LinearSample, QuadraticToy, QuarticToy, SmoothedQuantile
from .oracles import central_difference, prox_oracle
from .prox import prox, prox_generic_newton


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def __post_init__(self):
        self.passed = bool(self.passed)


def random_prox_instance(rng, kind):
    """Draw (model, z, gamma, theta) for one of the four loss kinds."""
    gamma = 10 ** rng.uniform(-3, 2)
    if kind == "linreg":
        p = int(rng.integers(1, 6))
        model = LinearRegression(p)
        z = LinearSample(float(rng.normal(scale=2.0)), rng.normal(size=p))
        theta = rng.normal(scale=3.0, size=p)
        return model, z, gamma, theta
    if kind == "quadratic":
        model = QuadraticToy()
    elif kind == "quartic":
        model = QuarticToy()
        gamma = 10 ** rng.uniform(-3, 1)
    else:
        model = SmoothedQuantile(float(rng.uniform(0.01, 0.99)), float(10 ** rng.uniform(-3, 0)))
    return model, float(rng.normal(scale=4.0)), gamma, np.array([rng.normal(scale=3.0)])


KINDS = ("linreg", "quadratic", "quartic", "quantile")


def check_prox_oracle(rng, n=1000, tol=1e-8):
    out = []
    for kind in KINDS:
        worst = 0.0
        for _ in range(n):
            model, z, gamma, theta = random_prox_instance(rng, kind)
            got = prox(model, z, gamma, theta)
            ref = prox_oracle(model, z, gamma, theta)
            err = float(np.max(np.abs(got - ref) / np.maximum(1.0, np.abs(ref))))
            worst = max(worst, err)
        out.append(CheckResult(f"prox-oracle[{kind}]", worst <= tol, f"max rel err {worst:.2e} (tol {tol:.0e})"))
    # closed forms against the generic Newton solver
    worst = 0.0
    for _ in range(n):
        kind = KINDS[int(rng.integers(0, 4))]
        if kind == "quartic":
            continue
        model, z, gamma, theta = random_prox_instance(rng, kind)
        a = prox(model, z, gamma, theta)
        b = prox_generic_newton(model, z, gamma, theta).theta_next
        worst = max(worst, float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b)))))
    out.append(CheckResult("prox-closed-vs-newton", worst <= 1e-10, f"max rel err {worst:.2e}"))
    return out


def random_spd(rng, p, cond=1e3):
    q, _ = np.linalg.qr(rng.normal(size=(p, p)))
    d = np.exp(rng.uniform(0.0, np.log(cond), size=p)) / 10.0
    return (q * d) @ q.T


def random_sym(rng, p):
    a = rng.normal(size=(p, p))
    return a + a.T


def check_lyapunov(rng, n=100):
    agree = resid = sym = 0.0
    for _ in range(n):
        p = int(rng.integers(1, 11))
        b = random_spd(rng, p)
        y = random_sym(rng, p)
        x1 = lyapunov_inverse_eig(b, y)
        x2 = lyapunov_inverse_kron(b, y)
        ny = np.linalg.norm(y)
        agree = max(agree, float(np.max(np.abs(x1 - x2))) / max(1.0, float(np.max(np.abs(x2)))))
        for x in (x1, x2):
            resid = max(resid, float(np.linalg.norm(b @ x + x @ b - y)) / ny)
        sym = max(sym, float(np.max(np.abs(x1 - x1.T))))
    return [
        CheckResult("lyapunov-eig-vs-kron", agree <= 1e-8, f"max rel diff {agree:.2e}"),
        CheckResult("lyapunov-round-trip", resid <= 1e-9, f"max rel residual {resid:.2e}"),
        CheckResult("lyapunov-symmetry", sym <= 1e-10, f"max asymmetry {sym:.2e}"),
    ]


def check_gradient_shrink(rng, n=1000):
    """|theta_next - theta| = gamma |grad(theta_next)| <= gamma |grad(theta)|."""
    eq = ineq = 0.0
    for i in range(n):
        model, z, gamma, theta = random_prox_instance(rng, KINDS[i % 4])
        nxt = prox(model, z, gamma, theta)
        move = float(np.linalg.norm(nxt - theta))
        g_new = gamma * float(np.linalg.norm(model.grad(z, nxt)))
        g_old = gamma * float(np.linalg.norm(model.grad(z, theta)))
        eq = max(eq, abs(move - g_new) / max(1.0, move))
        ineq = max(ineq, g_new - g_old)
    return [
        CheckResult("step-equals-new-gradient", eq <= 1e-10, f"max rel gap {eq:.2e}"),
        CheckResult("new-gradient-shrinks", ineq <= 1e-12, f"max excess {ineq:.2e}"),
    ]


def _away_from_kinks(model, z, theta, margin=1e-4):
    if not isinstance(model, SmoothedQuantile):
        return True
    u = theta[0] - z
    return abs(abs(u) - model.mu) > margin


def check_derivatives(rng, n=200, rtol=1e-5, h=1e-6):
    worst_g = worst_h = 0.0
    done = 0
    while done < n:
        model, z, _, theta = random_prox_instance(rng, KINDS[done % 4])
        if isinstance(model, SmoothedQuantile):
            theta = np.array([z + rng.uniform(-3, 3) * model.mu])
        if not _away_from_kinks(model, z, theta, margin=10 * h):
            continue
        d = rng.normal(size=theta.shape)
        g = model.grad(z, theta)
        fd = central_difference(lambda t: model.value(z, t), theta, d, h)
        worst_g = max(worst_g, abs(fd - g @ d) / max(1.0, abs(g @ d), abs(fd)))
        hd = model.hessian(z, theta) @ d
        fdg = central_difference(lambda t: model.grad(z, t), theta, d, h)
        worst_h = max(worst_h, float(np.max(np.abs(fdg - hd))) / max(1.0, float(np.max(np.abs(hd)))))
        done += 1
    return [
        CheckResult("finite-diff-gradient", worst_g <= rtol, f"max rel err {worst_g:.2e}"),
        CheckResult("finite-diff-hessian", worst_h <= rtol, f"max rel err {worst_h:.2e}"),
    ]


def check_flooring(rng, n=100):
    idem = lam = 0.0
    for _ in range(n):
        p = int(rng.integers(1, 8))
        h = random_sym(rng, p)
        delta = float(10 ** rng.uniform(-3, 0))
        once = adjusted_hessian(h, delta)
        twice = adjusted_hessian(once, delta)
        idem = max(idem, float(np.max(np.abs(once - twice))) / max(1.0, float(np.max(np.abs(once)))))
        lam = max(lam, delta - float(sym_eig(once)[0][0]))
    return [
        CheckResult("flooring-idempotent", idem <= 1e-10, f"max rel diff {idem:.2e}"),
        CheckResult("flooring-lambda-min", lam <= 1e-12, f"max shortfall {lam:.2e}"),
    ]


def run_selftest(seed=0, n_prox=1000, n_lyap=100, n_shrink=1000, n_deriv=200, n_floor=100):
    rng = np.random.default_rng(seed)
    results = []
    results += check_prox_oracle(rng, n_prox)
    results += check_lyapunov(rng, n_lyap)
    results += check_gradient_shrink(rng, n_shrink)
    results += check_derivatives(rng, n_deriv)
    results += check_flooring(rng, n_floor)
    return results
