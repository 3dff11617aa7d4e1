"""Implicit SGD driver with burn-in Polyak-Ruppert averaging.

``run`` advances one replication, or several in lockstep when handed a list
of generators.  Each replication owns its generator, so the iterates of a
replication do not depend on which others share its batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import NoAveragedIterates
from .model import stack, take
from .prox import prox

CHUNK = 2048


@dataclass(frozen=True)
class LearningRate:
    gamma1: float
    exponent: float

    def __post_init__(self):
        if self.gamma1 <= 0 or self.exponent <= 0:
            raise ValueError("gamma1 and exponent must be positive")

    def __call__(self, n):
        return step_size(self, n)


def step_size(lr: LearningRate, n):
    if np.any(np.asarray(n) < 1):
        raise ValueError("step index starts at 1")
    return lr.gamma1 * np.asarray(n, dtype=float) ** (-lr.exponent)


def phi(gamma, n):
    """(n^(1-gamma) - 1) / (1 - gamma), with the log n limit at gamma = 1."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if gamma == 1.0:
        return math.log(n)
    return math.expm1((1.0 - gamma) * math.log(n)) / (1.0 - gamma)


@dataclass
class IsgdState:
    n: int
    theta: np.ndarray
    avg_sum: np.ndarray
    avg_count: int
    burn_in: int = 0

    @classmethod
    def start(cls, theta0, burn_in=0):
        theta0 = np.array(theta0, dtype=float)
        return cls(0, theta0, np.zeros_like(theta0), 0, burn_in)


def averaged_iterate(state: IsgdState):
    if state.avg_count <= 0:
        raise NoAveragedIterates("no post-burn-in iterates have been averaged yet")
    return state.avg_sum / state.avg_count


def isgd_step(state: IsgdState, model, z, lr: LearningRate):
    """One implicit step; returns ``(new_state, theta_pre)``."""
    n = state.n + 1
    theta_pre = state.theta
    theta = prox(model, z, float(step_size(lr, n)), theta_pre)
    avg_sum, count = state.avg_sum, state.avg_count
    if n > state.burn_in:
        avg_sum = avg_sum + theta
        count += 1
    return replace(state, n=n, theta=theta, avg_sum=avg_sum, avg_count=count), theta_pre


def sgd_step(theta, model, z, lr: LearningRate, n):
    """Explicit SGD reference update, used only for stability comparisons."""
    return theta - float(step_size(lr, n)) * model.grad(z, theta)


class TraceSink:
    """Records squared estimation error and excess risk of the raw and
    averaged iterates at the checkpoints ceil(1.1^k).
    """

    post_burn_in_only = False

    def __init__(self, theta_star, risk=None, n_max=None, base=1.1):
        self.theta_star = np.asarray(theta_star, dtype=float)
        self.risk = risk
        self.base = base
        self.n_max = n_max
        self.records = {}

    def start(self, state, n_iters):
        last = state.n + n_iters if self.n_max is None else self.n_max
        self.checkpoints = geometric_checkpoints(last, self.base)
        self._burn_in = state.burn_in
        self._sum = np.array(state.avg_sum, dtype=float)
        self._count = state.avg_count
        self.records = {key: [] for key in ("rm_sq", "pr_sq", "rm_opt", "pr_opt")}

    def consume(self, first_step, samples, theta_pre, theta_post):
        k = theta_post.shape[0]
        steps = np.arange(first_step, first_step + k)
        w = (steps > self._burn_in).astype(float).reshape((k,) + (1,) * (theta_post.ndim - 1))
        csum = self._sum + np.cumsum(theta_post * w, axis=0)
        ccount = self._count + np.cumsum(steps > self._burn_in)
        hit = np.isin(steps, self.checkpoints)
        for i in np.flatnonzero(hit):
            th = theta_post[i]
            avg = csum[i] / ccount[i] if ccount[i] > 0 else np.full_like(th, np.nan)
            self.records["rm_sq"].append(np.sum((th - self.theta_star) ** 2, axis=-1))
            self.records["pr_sq"].append(np.sum((avg - self.theta_star) ** 2, axis=-1))
            if self.risk is not None:
                r_star = self.risk(self.theta_star)
                self.records["rm_opt"].append(self.risk(th) - r_star)
                self.records["pr_opt"].append(self.risk(avg) - r_star)
        self._sum = csum[-1]
        self._count = int(ccount[-1])

    def series(self, key):
        """Checkpoints and per-replication values, shape ``(n_checkpoints, ...)``."""
        return self.checkpoints[: len(self.records[key])], np.array(self.records[key])


def geometric_checkpoints(n_max, base=1.1):
    out = []
    k = 0
    while True:
        n = math.ceil(base**k - 1e-9)
        if n > n_max:
            break
        if not out or n != out[-1]:
            out.append(n)
        k += 1
    return np.array(out, dtype=np.int64)


def run(model, stream, lr: LearningRate, n_iters, theta0, burn_in_fraction=0.1, rng=None, sinks=(),
        chunk_size=CHUNK):
    """Run ``n_iters`` implicit steps drawing fresh samples from ``stream``.

    ``rng`` is a numpy Generator (one replication, ``theta`` of shape
    ``(p,)``) or a sequence of Generators (one per replication, ``theta`` of
    shape ``(B, p)``).  Sinks receive ``(first_step, samples, theta_pre,
    theta_post)`` per chunk with the chunk on axis 0; sinks flagged
    ``post_burn_in_only`` only see steps after the burn-in.
    """
    if n_iters < 1:
        raise ValueError("n_iters must be >= 1")
    if not 0.0 <= burn_in_fraction < 1.0:
        raise ValueError("burn_in_fraction must lie in [0, 1)")
    batched = isinstance(rng, Sequence)
    rngs = list(rng) if batched else [rng if rng is not None else np.random.default_rng()]
    theta0 = np.asarray(theta0, dtype=float)
    if theta0.ndim == 0:
        theta0 = np.full(stream.dim, float(theta0))
    theta = np.broadcast_to(theta0, (len(rngs),) + theta0.shape[-1:]).copy() if batched else theta0.copy()
    burn_in = math.floor(burn_in_fraction * n_iters)
    state = IsgdState(0, theta, np.zeros_like(theta), 0, burn_in)
    for sink in sinks:
        if hasattr(sink, "start"):
            sink.start(state, n_iters)

    avg_sum = np.zeros_like(theta)
    avg_count = 0
    n = 0
    while n < n_iters:
        k = min(chunk_size, n_iters - n)
        if batched:
            samples = stack([stream.draw(g, k) for g in rngs], axis=1)
        else:
            samples = stream.draw(rngs[0], k)
        pre = np.empty((k,) + theta.shape)
        post = np.empty((k,) + theta.shape)
        steps = lr.gamma1 * np.arange(n + 1, n + k + 1, dtype=float) ** (-lr.exponent)
        for i in range(k):
            pre[i] = theta
            theta = prox(model, take(samples, i), steps[i], theta)
            post[i] = theta
        first = n + 1
        n += k
        keep = max(0, burn_in - first + 1)
        if keep < k:
            avg_sum += post[keep:].sum(axis=0)
            avg_count += k - keep
        for sink in sinks:
            if getattr(sink, "post_burn_in_only", False):
                if keep < k:
                    sink.consume(first + keep, take(samples, slice(keep, None)), pre[keep:], post[keep:])
            else:
                sink.consume(first, samples, pre, post)
    return IsgdState(n, theta, avg_sum, avg_count, burn_in)
