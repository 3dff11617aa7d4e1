import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from proxsgd.errors import DimensionMismatch
from proxsgd.model import (
    CovarianceSpec,
    LinearRegression,
    LinearRegressionStream,
    LinearSample,
    QuadraticToy,
    QuarticToy,
    ScalarNormalStream,
    SmoothedQuantile,
    gen_linear_sample,
    gen_scalar_sample,
    loss_grad,
    loss_hessian,
    loss_value,
    quantile_stream,
    toy_stream,
)
from proxsgd.oracles import central_difference

finite = st.floats(-20, 20, allow_nan=False)


def test_loss_value_examples():
    assert loss_value(QuadraticToy(), 0.0, np.array([2.0])) == pytest.approx(2.0)
    assert loss_value(LinearRegression(1), LinearSample(0.0, np.array([1.0])), np.array([1.0])) == pytest.approx(0.5)
    # kink center: (mu + mu)^2 / (4 mu) ... with u = 0 the band value is mu / 4
    assert loss_value(SmoothedQuantile(0.99, 0.1), 0.0, np.array([0.0])) == pytest.approx(0.025)


def test_loss_grad_examples():
    np.testing.assert_allclose(loss_grad(QuadraticToy(), 3.0, np.array([2.0])), [5.0])
    g = loss_grad(LinearRegression(2), LinearSample(1.0, np.array([1.0, 0.0])), np.zeros(2))
    np.testing.assert_allclose(g, [-1.0, 0.0])
    np.testing.assert_allclose(loss_grad(SmoothedQuantile(0.5, 1.0), 0.0, np.array([0.0])), [0.0], atol=1e-15)


def test_loss_hessian_examples():
    h = loss_hessian(LinearRegression(2), LinearSample(0.3, np.array([1.0, 2.0])), np.array([5.0, -1.0]))
    np.testing.assert_allclose(h, [[1, 2], [2, 4]])
    np.testing.assert_allclose(loss_hessian(QuadraticToy(), -7.0, np.array([3.0])), [[1.0]])
    np.testing.assert_allclose(loss_hessian(SmoothedQuantile(0.99, 0.1), 0.0, np.array([0.0])), [[5.0]])


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        loss_value(LinearRegression(3), LinearSample(0.0, np.ones(3)), np.ones(2))
    with pytest.raises(DimensionMismatch):
        loss_grad(QuadraticToy(), 0.0, np.ones(2))


def test_smoothed_quantile_pieces():
    m = SmoothedQuantile(0.3, 0.5)
    # below the band the loss is -alpha * u, above it (1 - alpha) * u
    assert loss_value(m, 0.0, np.array([-2.0])) == pytest.approx(0.6)
    assert loss_value(m, 0.0, np.array([2.0])) == pytest.approx(1.4)
    np.testing.assert_allclose(loss_hessian(m, 0.0, np.array([3.0])), [[0.0]])
    # boundaries belong to the quadratic piece
    np.testing.assert_allclose(loss_hessian(m, 0.0, np.array([0.5])), [[1.0]])
    np.testing.assert_allclose(loss_hessian(m, 0.0, np.array([-0.5])), [[1.0]])


def test_smoothed_quantile_rejects_bad_params():
    with pytest.raises(ValueError):
        SmoothedQuantile(1.2, 0.1)
    with pytest.raises(ValueError):
        SmoothedQuantile(0.5, 0.0)


def _models():
    return st.sampled_from([QuadraticToy(), QuarticToy(), SmoothedQuantile(0.9, 0.3), LinearRegression(3)])


def _sample(model, data):
    if isinstance(model, LinearRegression):
        x = np.array(data.draw(st.lists(finite, min_size=3, max_size=3)))
        return LinearSample(data.draw(finite), x), np.array(data.draw(st.lists(finite, min_size=3, max_size=3)))
    return data.draw(finite), np.array([data.draw(st.floats(-3, 3))])


@given(_models(), st.data())
def test_finite_difference_gradient_and_hessian(model, data):
    z, theta = _sample(model, data)
    if isinstance(model, SmoothedQuantile) and abs(abs(theta[0] - z) - model.mu) < 1e-4:
        return
    d = np.ones_like(theta) / np.sqrt(theta.size)
    g = model.grad(z, theta)
    fd = central_difference(lambda t: model.value(z, t), theta, d)
    assert abs(fd - g @ d) <= 1e-5 * max(1.0, abs(fd))
    hd = model.hessian(z, theta) @ d
    fdg = central_difference(lambda t: model.grad(z, t), theta, d)
    assert np.max(np.abs(fdg - hd)) <= 1e-5 * max(1.0, np.max(np.abs(hd)))


@given(_models(), st.data(), st.floats(0.01, 0.99))
def test_convexity(model, data, t):
    z, a = _sample(model, data)
    _, b = _sample(model, data)
    lhs = model.value(z, t * a + (1 - t) * b)
    rhs = t * model.value(z, a) + (1 - t) * model.value(z, b)
    assert lhs <= rhs + 1e-12 * max(1.0, abs(rhs))


@given(st.floats(0.01, 0.99), st.floats(1e-3, 2.0), finite, finite, finite)
def test_smoothed_quantile_gradient_lipschitz(alpha, mu, z, a, b):
    m = SmoothedQuantile(alpha, mu)
    diff = abs(m.grad(z, np.array([a]))[0] - m.grad(z, np.array([b]))[0])
    assert diff <= abs(a - b) / (2 * mu) * (1 + 1e-12) + 1e-12


def test_batched_evaluation_matches_loop(rng):
    m = LinearRegression(4)
    x = rng.normal(size=(7, 4))
    y = rng.normal(size=7)
    theta = rng.normal(size=(7, 4))
    g = m.grad(LinearSample(y, x), theta)
    for i in range(7):
        np.testing.assert_allclose(g[i], m.grad(LinearSample(y[i], x[i]), theta[i]))
    np.testing.assert_allclose(m.hessian_sum(LinearSample(y, x), theta), x.T @ x)


@pytest.mark.parametrize("kind", ["identity", "toeplitz", "equicorr"])
def test_covariance_spec_is_spd_with_unit_diagonal(kind):
    s = CovarianceSpec(kind, 6).matrix()
    np.testing.assert_allclose(np.diag(s), 1.0)
    np.testing.assert_allclose(s, s.T)
    assert np.linalg.eigvalsh(s).min() > 0


def test_covariance_examples():
    np.testing.assert_allclose(CovarianceSpec("equicorr", 2).matrix(), [[1, 0.2], [0.2, 1]])
    np.testing.assert_allclose(CovarianceSpec("toeplitz", 3).matrix()[0], [1, 0.5, 0.25])


def test_identity_sample_uses_next_two_normals():
    a = gen_linear_sample(CovarianceSpec("identity", 1), np.array([1.0]), np.random.default_rng(3))
    u = np.random.default_rng(3).standard_normal(2)
    assert a.x[0] == u[0]
    assert a.y == pytest.approx(u[0] + u[1])


def test_toeplitz_lag_one_correlation():
    s = LinearRegressionStream(CovarianceSpec("toeplitz", 3), np.ones(3)).draw(np.random.default_rng(1), 100_000)
    r = np.corrcoef(s.x[:, 0], s.x[:, 1])[0, 1]
    assert abs(r - 0.5) <= 0.02


def test_linear_noise_is_standard_normal():
    s = LinearRegressionStream(CovarianceSpec("identity", 2), np.array([1.0, -2.0])).draw(
        np.random.default_rng(2), 200_000)
    eps = s.y - s.x @ np.array([1.0, -2.0])
    assert abs(eps.var() - 1.0) < 0.02
    assert abs(np.corrcoef(eps, s.x[:, 0])[0, 1]) < 0.01


def test_scalar_streams():
    u = np.random.default_rng(4).standard_normal()
    assert gen_scalar_sample(toy_stream(4.0), np.random.default_rng(4)) == pytest.approx(4 * u)
    z = quantile_stream().draw(np.random.default_rng(5), 1_000_000)
    assert abs(z.mean()) <= 0.01
    assert abs(z.var() - 1.0) <= 0.02
    assert np.all(ScalarNormalStream(0.0).draw(np.random.default_rng(0), 5) == 0.0)
