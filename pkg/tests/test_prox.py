import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from proxsgd.errors import MaxIterExceeded
from proxsgd.model import LinearRegression, LinearSample, QuadraticToy, QuarticToy, SmoothedQuantile
from proxsgd.oracles import prox_oracle
from proxsgd.prox import (
    defect_norm,
    prox,
    prox_generic_newton,
    prox_linear_regression,
    prox_quadratic_toy,
    prox_smoothed_quantile,
)
from proxsgd.selftest import KINDS, random_prox_instance

seeds = st.integers(0, 2**32 - 1)


def test_quadratic_closed_form_examples():
    assert prox_quadratic_toy(0.0, 1.0, 10.0) == 5.0
    assert prox_quadratic_toy(2.0, 1.0, 0.0) == -1.0
    ref = prox_oracle(QuadraticToy(), 1.7, 0.3, np.array([4.2]))[0]
    assert prox_quadratic_toy(1.7, 0.3, 4.2) == pytest.approx(ref, abs=1e-8)


def test_linear_regression_examples(rng):
    np.testing.assert_allclose(prox_linear_regression(0.0, np.array([1.0]), 1.0, np.array([1.0])), [0.5])
    theta = np.array([1.0, -2.0, 3.0])
    np.testing.assert_array_equal(prox_linear_regression(4.0, np.zeros(3), 0.7, theta), theta)
    x, theta = rng.normal(size=3), rng.normal(size=3)
    z = LinearSample(0.4, x)
    closed = prox_linear_regression(0.4, x, 0.8, theta)
    newton = prox_generic_newton(LinearRegression(3), z, 0.8, theta).theta_next
    np.testing.assert_allclose(closed, newton, rtol=1e-10, atol=1e-10)


def test_smoothed_quantile_examples():
    assert prox_smoothed_quantile(0.0, 0.5, 1.0, 1.0, 0.0) == pytest.approx(0.0, abs=1e-15)
    # far below the band the prox moves up by gamma * alpha
    assert prox_smoothed_quantile(5.0, 0.3, 0.1, 0.5, -10.0) == pytest.approx(-10.0 + 0.15)
    got = prox_smoothed_quantile(0.3, 0.99, 0.01, 0.5, 2.0)
    ref = prox_oracle(SmoothedQuantile(0.99, 0.01), 0.3, 0.5, np.array([2.0]))[0]
    assert got == pytest.approx(ref, abs=1e-8)


def test_generic_newton_examples():
    res = prox_generic_newton(QuadraticToy(), 0.0, 1.0, np.array([10.0]))
    assert res.theta_next[0] == pytest.approx(5.0, abs=1e-12)
    res = prox_generic_newton(QuarticToy(), 0.0, 1.0, np.array([2.0]))
    assert res.theta_next[0] == pytest.approx(1.0, abs=1e-12)
    res = prox_generic_newton(QuarticToy(), 1.0, 2.0, np.array([0.5]))
    ref = prox_oracle(QuarticToy(), 1.0, 2.0, np.array([0.5]))
    np.testing.assert_allclose(res.theta_next, ref, atol=1e-8)
    assert res.residual <= 1e-12
    assert res.iterations >= 1


def test_generic_newton_reports_max_iter():
    with pytest.raises(MaxIterExceeded) as info:
        prox_generic_newton(QuarticToy(), 0.0, 100.0, np.array([1e6]), max_iter=1)
    assert info.value.best is not None


@given(seeds, st.sampled_from(KINDS))
def test_prox_matches_golden_section_oracle(seed, kind):
    model, z, gamma, theta = random_prox_instance(np.random.default_rng(seed), kind)
    got = prox(model, z, gamma, theta)
    ref = prox_oracle(model, z, gamma, theta)
    assert np.max(np.abs(got - ref) / np.maximum(1.0, np.abs(ref))) <= 1e-8


@given(seeds, st.sampled_from(KINDS))
def test_defect_identity(seed, kind):
    model, z, gamma, theta = random_prox_instance(np.random.default_rng(seed), kind)
    nxt = prox(model, z, gamma, theta)
    # evaluating t - theta + gamma * grad(t) rounds at the size of its largest terms
    h = np.linalg.norm(model.hessian(z, nxt), 2)
    t = np.linalg.norm(nxt)
    scale = t + np.linalg.norm(theta) + gamma * (np.linalg.norm(model.grad(z, nxt)) + h * t)
    assert defect_norm(model, z, gamma, theta, nxt) <= max(1e-12, 64 * np.finfo(float).eps * scale)


@given(seeds, st.sampled_from(KINDS))
def test_implicit_step_shrinks_gradient(seed, kind):
    model, z, gamma, theta = random_prox_instance(np.random.default_rng(seed), kind)
    nxt = prox(model, z, gamma, theta)
    move = np.linalg.norm(nxt - theta)
    g_new = gamma * np.linalg.norm(model.grad(z, nxt))
    g_old = gamma * np.linalg.norm(model.grad(z, theta))
    assert abs(move - g_new) <= 1e-10 * max(1.0, move)
    assert g_new <= g_old + 1e-12


@given(seeds, st.sampled_from(KINDS))
def test_nonexpansive(seed, kind):
    rng = np.random.default_rng(seed)
    model, z, gamma, a = random_prox_instance(rng, kind)
    b = a + rng.normal(scale=2.0, size=a.shape)
    pa, pb = prox(model, z, gamma, a), prox(model, z, gamma, b)
    assert np.linalg.norm(pa - pb) <= np.linalg.norm(a - b) * (1 + 1e-12) + 1e-12


@given(seeds, st.sampled_from(["linreg", "quadratic", "quantile"]))
def test_closed_forms_agree_with_newton(seed, kind):
    model, z, gamma, theta = random_prox_instance(np.random.default_rng(seed), kind)
    a = prox(model, z, gamma, theta)
    b = prox_generic_newton(model, z, gamma, theta).theta_next
    assert np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b))) <= 1e-10


def test_batched_prox_matches_scalar_calls(rng):
    m = QuarticToy()
    z = rng.normal(size=6)
    theta = rng.normal(size=(6, 1))
    gamma = np.full(6, 0.7)
    batch = prox_generic_newton(m, z, gamma, theta).theta_next
    for i in range(6):
        np.testing.assert_allclose(batch[i], prox(m, z[i], 0.7, theta[i]), atol=1e-12)
