import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from proxsgd.engine import (
    IsgdState,
    LearningRate,
    TraceSink,
    averaged_iterate,
    geometric_checkpoints,
    isgd_step,
    phi,
    run,
    sgd_step,
    step_size,
)
from proxsgd.errors import NoAveragedIterates
from proxsgd.model import (
    CovarianceSpec,
    LinearRegression,
    LinearRegressionStream,
    LinearSample,
    QuadraticToy,
    QuarticToy,
    ScalarNormalStream,
    toy_stream,
)
from proxsgd.prox import defect_norm


class Recorder:
    post_burn_in_only = False

    def __init__(self):
        self.steps = []

    def consume(self, first_step, samples, theta_pre, theta_post):
        self.steps.extend(range(first_step, first_step + len(theta_pre)))


class PostBurnInRecorder(Recorder):
    post_burn_in_only = True


def test_step_size_examples():
    assert step_size(LearningRate(5.0, 0.5), 4) == pytest.approx(2.5)
    assert step_size(LearningRate(1.0, 1.0), 10) == pytest.approx(0.1)
    assert step_size(LearningRate(3.7, 0.6), 1) == 3.7


@given(st.floats(0.01, 100), st.floats(0.05, 2.0), st.integers(1, 10**6))
def test_step_size_strictly_decreasing(g1, g, n):
    lr = LearningRate(g1, g)
    assert step_size(lr, n + 1) < step_size(lr, n)


def test_learning_rate_rejects_nonpositive():
    with pytest.raises(ValueError):
        LearningRate(0.0, 0.5)
    with pytest.raises(ValueError):
        LearningRate(1.0, -0.1)


def test_phi_examples():
    assert phi(0.5, 4) == pytest.approx(2.0)
    assert phi(1.0, 10) == pytest.approx(2.302585, abs=1e-6)
    # continuity at gamma = 1; the gap is (1 - gamma) log(n)^2 / 2 to first order
    gap = phi(0.999, 100) - phi(1.0, 100)
    assert abs(gap) < 1e-2 * phi(1.0, 100)
    assert gap == pytest.approx(0.0005 * math.log(100) ** 2, rel=1e-2)
    assert phi(0.7, 1) == 0.0


def test_isgd_step_examples():
    m, lr = QuadraticToy(), LearningRate(1.0, 1.0)
    s = IsgdState.start(np.array([10.0]))
    s, pre = isgd_step(s, m, 0.0, lr)
    assert s.theta[0] == pytest.approx(5.0)
    assert pre[0] == 10.0
    s, _ = isgd_step(s, m, 0.0, lr)
    assert s.theta[0] == pytest.approx(10.0 / 3.0)


def test_isgd_step_linear_defect(rng):
    m, lr = LinearRegression(4), LearningRate(2.0, 0.6)
    s = IsgdState.start(rng.normal(size=4))
    z = LinearSample(0.7, rng.normal(size=4))
    new, pre = isgd_step(s, m, z, lr)
    assert defect_norm(m, z, step_size(lr, 1), pre, new.theta) <= 1e-12


def test_isgd_step_respects_burn_in():
    m, lr = QuadraticToy(), LearningRate(1.0, 1.0)
    s = IsgdState.start(np.array([10.0]), burn_in=1)
    s, _ = isgd_step(s, m, 0.0, lr)
    assert s.avg_count == 0
    with pytest.raises(NoAveragedIterates):
        averaged_iterate(s)
    s, _ = isgd_step(s, m, 0.0, lr)
    assert averaged_iterate(s)[0] == pytest.approx(10.0 / 3.0)


def test_averaged_iterate_examples():
    s = IsgdState(2, np.array([4.0]), np.array([6.0]), 2, 0)
    assert averaged_iterate(s)[0] == 3.0
    s = IsgdState(1, np.array([7.0]), np.array([7.0]), 1, 0)
    assert averaged_iterate(s)[0] == 7.0


def test_run_burn_in_arithmetic():
    state = run(QuadraticToy(), toy_stream(), LearningRate(1.0, 0.6), 10, 0.0, 0.1, np.random.default_rng(0))
    assert state.burn_in == 1
    assert state.avg_count == 9


def test_run_noise_free_quadratic_matches_hand_composition():
    state = run(QuadraticToy(), ScalarNormalStream(0.0), LearningRate(1.0, 1.0), 3, 10.0, 0.0,
                np.random.default_rng(0))
    assert state.theta[0] == pytest.approx(2.5)
    iterates = [10.0]
    for k in (1, 2, 3):
        iterates.append(iterates[-1] / (1 + 1 / k))
    assert averaged_iterate(state)[0] == pytest.approx(np.mean(iterates[1:]))


def test_run_equals_repeated_isgd_step():
    m = LinearRegression(3)
    stream = LinearRegressionStream(CovarianceSpec("toeplitz", 3), np.array([1.0, -1.0, 2.0]))
    lr = LearningRate(2.0, 0.7)
    state = run(m, stream, lr, 300, 0.0, 0.2, np.random.default_rng(9), chunk_size=64)
    samples = stream.draw(np.random.default_rng(9), 300)
    s = IsgdState.start(np.zeros(3), burn_in=60)
    for i in range(300):
        s, _ = isgd_step(s, m, LinearSample(samples.y[i], samples.x[i]), lr)
    np.testing.assert_allclose(state.theta, s.theta, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(averaged_iterate(state), averaged_iterate(s), rtol=1e-12)
    assert state.avg_count == s.avg_count == 240


@pytest.mark.parametrize("chunk", [1, 7, 100, 5000])
def test_run_is_chunk_invariant(chunk):
    lr = LearningRate(5.0, 0.5)
    ref = run(QuarticToy(), toy_stream(), lr, 1000, 2.0, 0.1, np.random.default_rng(4), chunk_size=1000)
    got = run(QuarticToy(), toy_stream(), lr, 1000, 2.0, 0.1, np.random.default_rng(4), chunk_size=chunk)
    np.testing.assert_array_equal(got.theta, ref.theta)
    np.testing.assert_allclose(got.avg_sum, ref.avg_sum, rtol=1e-12)


def test_batched_run_matches_individual_runs():
    lr = LearningRate(3.0, 0.6)
    seeds = [11, 12, 13]
    batch = run(QuadraticToy(), toy_stream(), lr, 500, 10.0, 0.1, [np.random.default_rng(s) for s in seeds])
    for b, seed in enumerate(seeds):
        one = run(QuadraticToy(), toy_stream(), lr, 500, 10.0, 0.1, np.random.default_rng(seed))
        np.testing.assert_allclose(batch.theta[b], one.theta, rtol=1e-13)


def test_run_determinism():
    args = (LinearRegression(2), LinearRegressionStream(CovarianceSpec("equicorr", 2), np.ones(2)),
            LearningRate(1.0, 0.6), 2000, 0.0, 0.1)
    a = run(*args, rng=np.random.default_rng(5))
    b = run(*args, rng=np.random.default_rng(5))
    assert a.theta.tobytes() == b.theta.tobytes()
    assert a.avg_sum.tobytes() == b.avg_sum.tobytes()


def test_sink_routing():
    every, post = Recorder(), PostBurnInRecorder()
    run(QuadraticToy(), toy_stream(), LearningRate(1.0, 0.6), 50, 0.0, 0.2, np.random.default_rng(0),
        [every, post], chunk_size=16)
    assert every.steps == list(range(1, 51))
    assert post.steps == list(range(11, 51))


def test_run_validates_arguments():
    with pytest.raises(ValueError):
        run(QuadraticToy(), toy_stream(), LearningRate(1.0, 0.6), 0, 0.0)
    with pytest.raises(ValueError):
        run(QuadraticToy(), toy_stream(), LearningRate(1.0, 0.6), 10, 0.0, 1.0)


def test_geometric_checkpoints():
    c = geometric_checkpoints(100)
    assert c[0] == 1
    assert c[-1] <= 100
    assert np.all(np.diff(c) > 0)
    expected = sorted({math.ceil(1.1**k - 1e-9) for k in range(60) if math.ceil(1.1**k - 1e-9) <= 100})
    assert c.tolist() == expected


def test_trace_sink_records_noise_free_sequence():
    sink = TraceSink(np.zeros(1), QuadraticToy().risk)
    run(QuadraticToy(), ScalarNormalStream(0.0), LearningRate(1.0, 1.0), 30, 10.0, 0.0,
        np.random.default_rng(0), [sink])
    n, sq = sink.series("rm_sq")
    # with gamma_k = 1/k the product telescopes: theta_n = 10 / (n + 1)
    np.testing.assert_allclose(sq, (10.0 / (n + 1)) ** 2)
    _, opt = sink.series("rm_opt")
    np.testing.assert_allclose(opt, 0.5 * (10.0 / (n + 1)) ** 2)


@pytest.mark.parametrize("model", [QuadraticToy(), QuarticToy()])
def test_noise_free_iterates_strictly_shrink(model):
    s = IsgdState.start(np.array([3.0]))
    lr = LearningRate(2.0, 0.5)
    prev = 3.0
    for _ in range(200):
        s, _ = isgd_step(s, model, 0.0, lr)
        assert abs(s.theta[0]) < prev
        prev = abs(s.theta[0])


def test_implicit_stable_where_explicit_diverges():
    lr = LearningRate(100.0, 0.5)
    stream = toy_stream()
    state = run(QuadraticToy(), stream, lr, 10_000, 10.0, 0.0, np.random.default_rng(1),
                [sink := TraceSink(np.zeros(1))])
    _, sq = sink.series("rm_sq")
    assert np.sqrt(sq.max()) <= 10.0 + 10 * 4 * 100
    assert np.isfinite(state.theta).all()
    z = stream.draw(np.random.default_rng(1), 50)
    theta = np.array([10.0])
    with np.errstate(over="ignore", invalid="ignore"):
        peak = 0.0
        for n in range(1, 51):
            theta = sgd_step(theta, QuadraticToy(), z[n - 1], lr, n)
            peak = max(peak, abs(theta[0]))
    assert peak > 1e10
