"""Small dense symmetric linear algebra.

Eigendecomposition is done by cyclic Jacobi rotations, which is accurate for
the small covariance matrices handled here and fully deterministic.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConvergenceFailure, DimensionMismatch, SingularLyapunov

KRON_MAX_DIM = 32


def _as_square(a):
    a = np.array(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    return a


def is_symmetric(a, rtol=1e-12):
    a = np.asarray(a, dtype=float)
    return bool(np.all(np.abs(a - a.T) <= rtol * (1.0 + np.abs(a))))


def _off_norm(a):
    return math.sqrt(2.0) * float(np.linalg.norm(np.triu(a, 1)))


def sym_eig(a, tol=1e-15, max_sweeps=60):
    """Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric matrix.

    Returns ``(d, v)`` with ``a = v @ diag(d) @ v.T``.
    """
    a = _as_square(a)
    a = 0.5 * (a + a.T)
    p = a.shape[0]
    v = np.eye(p)
    scale = np.linalg.norm(a)
    if p == 1 or scale == 0.0:
        return np.diag(a).copy(), v
    converged = False
    for _ in range(max_sweeps):
        off = _off_norm(a)
        if off <= tol * scale:
            converged = True
            break
        for i in range(p - 1):
            for j in range(i + 1, p):
                aij = a[i, j]
                if aij == 0.0:
                    continue
                aii, ajj = a[i, i], a[j, j]
                if abs(aij) < 1e-300 or abs(aij) <= 1e-18 * math.sqrt(abs(aii * ajj)):
                    a[i, j] = a[j, i] = 0.0
                    continue
                tau = (ajj - aii) / (2.0 * aij)
                t = math.copysign(1.0, tau) / (abs(tau) + math.sqrt(tau * tau + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                ci, cj = a[:, i].copy(), a[:, j].copy()
                a[:, i] = c * ci - s * cj
                a[:, j] = s * ci + c * cj
                ri, rj = a[i, :].copy(), a[j, :].copy()
                a[i, :] = c * ri - s * rj
                a[j, :] = s * ri + c * rj
                a[i, j] = a[j, i] = 0.0
                vi, vj = v[:, i].copy(), v[:, j].copy()
                v[:, i] = c * vi - s * vj
                v[:, j] = s * vi + c * vj
    if not converged:
        off = _off_norm(a)
        if off > 1e-12 * scale:
            raise ConvergenceFailure(f"Jacobi sweeps did not converge (off-diagonal norm {off:.3e})")
    d = np.diag(a).copy()
    order = np.argsort(d, kind="stable")
    return d[order], v[:, order]


def lyapunov_inverse_eig(b, y, tol=1e-12):
    """Solve B X + X B = Y for symmetric X via the eigenbasis of B."""
    b = _as_square(b)
    y = _as_square(y)
    if b.shape != y.shape:
        raise DimensionMismatch(f"shapes {b.shape} and {y.shape} differ")
    d, v = sym_eig(b)
    denom = d[:, None] + d[None, :]
    if np.min(denom) <= tol * max(1.0, float(np.max(np.abs(d)))):
        raise SingularLyapunov(f"smallest eigenvalue pair sum {np.min(denom):.3e} is not positive")
    x = v @ ((v.T @ y @ v) / denom) @ v.T
    return 0.5 * (x + x.T)


def lyapunov_inverse_kron(b, y):
    """Solve B X + X B = Y through the p^2 x p^2 Kronecker system."""
    b = _as_square(b)
    y = _as_square(y)
    p = b.shape[0]
    if y.shape != b.shape:
        raise DimensionMismatch(f"shapes {b.shape} and {y.shape} differ")
    if p > KRON_MAX_DIM:
        raise ValueError(f"Kronecker route limited to p <= {KRON_MAX_DIM}, got {p}")
    eye = np.eye(p)
    k = np.kron(eye, b) + np.kron(b, eye)
    try:
        vec = np.linalg.solve(k, y.reshape(-1, order="F"))
    except np.linalg.LinAlgError as exc:
        raise SingularLyapunov(str(exc)) from exc
    return vec.reshape(p, p, order="F")


def frobenius(a):
    return float(np.linalg.norm(np.asarray(a, dtype=float), "fro"))


def operator_2_norm(a):
    d, _ = sym_eig(a)
    return float(np.max(np.abs(d)))
