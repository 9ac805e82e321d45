import numpy as np
import pytest

from doubleq.core import NumericError, rng_stream
from doubleq.neural import (MlpParameters, OptimizerState, ShapeError, backward, forward, init_weights,
                            load_checkpoint, rmsprop_step, save_checkpoint)
from oracles import central_differences, scalar_rmsprop


def random_net(seed, sizes, shared=False):
    params = init_weights(sizes, rng_stream(seed, "init"), shared)
    rng = np.random.default_rng(seed)
    for b in params.biases:
        b[:] = rng.standard_normal(b.shape) * 0.1
    return params


def max_rel_error(params, x, g, h=1e-5):
    grads = backward(params, x, g)
    fn = lambda: float(np.sum(g * forward(params, x)))
    numeric = central_differences(fn, params.arrays(), h)
    worst = 0.0
    for an, nu in zip(grads.arrays(), numeric):
        denom = np.maximum(np.maximum(np.abs(an), np.abs(nu)), 1e-7)
        worst = max(worst, float(np.max(np.abs(an - nu) / denom)))
    return worst


class TestForward:
    def test_zero_params(self):
        p = init_weights((4, 8, 3), rng_stream(0, "init")).zeros_like()
        np.testing.assert_array_equal(forward(p, np.arange(4.0)), np.zeros(3))

    def test_linear_identity(self):
        p = MlpParameters((3, 3), [np.eye(3)], [np.zeros(3)])
        np.testing.assert_array_equal(forward(p, [1.0, -2.0, 5.0]), [1.0, -2.0, 5.0])

    def test_shared_bias_shift(self):
        p = random_net(1, (2, 6, 4), shared=True)
        x = np.array([0.3, -1.2])
        before = forward(p, x)
        p.biases[-1] += 2.5
        after = forward(p, x)
        np.testing.assert_allclose(after - before, 2.5)
        assert np.argmax(after) == np.argmax(before)

    def test_batch_matches_single(self):
        p = random_net(2, (3, 5, 2))
        x = np.random.default_rng(0).standard_normal((7, 3))
        np.testing.assert_allclose(forward(p, x), np.array([forward(p, r) for r in x]))

    def test_shape_error(self):
        with pytest.raises(ShapeError):
            forward(random_net(0, (3, 2)), np.zeros(4))

    def test_hidden_rectified(self):
        from doubleq.neural import _forward_layers
        p = random_net(3, (3, 16, 16, 2))
        acts = _forward_layers(p, np.random.default_rng(1).standard_normal((20, 3)))
        assert all(np.all(a >= 0) for a in acts[1:-1])


class TestBackward:
    def test_zero_output_gradient(self):
        p = random_net(0, (3, 5, 2))
        grads = backward(p, np.ones(3), np.zeros(2))
        assert all(np.all(g == 0) for g in grads.arrays())

    def test_linear_one_hot(self):
        p = MlpParameters((3, 2), [np.ones((2, 3))], [np.zeros(2)])
        x = np.array([1.0, 2.0, 3.0])
        g = backward(p, x, [0.0, 1.0])
        np.testing.assert_array_equal(g.weights[0], [[0, 0, 0], [1, 2, 3]])
        np.testing.assert_array_equal(g.biases[0], [0.0, 1.0])

    def test_small_net_matches_finite_differences(self):
        p = random_net(5, (3, 5, 2))
        x = np.array([0.4, -0.7, 1.1])
        assert max_rel_error(p, x, np.array([0.3, -1.2])) < 1e-4

    @pytest.mark.parametrize("shared", [False, True])
    def test_batched_and_shared_bias(self, shared):
        p = random_net(6, (4, 6, 5, 3), shared)
        rng = np.random.default_rng(6)
        assert max_rel_error(p, rng.standard_normal((5, 4)), rng.standard_normal((5, 3))) < 1e-4


class TestRmsprop:
    def test_zero_gradient(self):
        p = random_net(0, (2, 3, 2))
        before = p.copy()
        opt = OptimizerState.for_params(p)
        for acc in opt.accumulators:
            acc[:] = 1.0
        rmsprop_step(p, p.zeros_like(), opt)
        assert p.equals(before)
        assert all(np.allclose(acc, 0.95) for acc in opt.accumulators)

    def test_scalar_reference(self):
        p = MlpParameters((1, 1), [np.zeros((1, 1))], [np.zeros(1)])
        opt = OptimizerState.for_params(p, lr=0.1, decay=0.95, damping=1e-8)
        g = MlpParameters((1, 1), [np.ones((1, 1))], [np.zeros(1)])
        rmsprop_step(p, g, opt)
        assert opt.accumulators[0][0, 0] == pytest.approx(0.05)
        assert p.weights[0][0, 0] == pytest.approx(-0.4472, abs=1e-4)
        assert p.weights[0][0, 0] == pytest.approx(scalar_rmsprop(0.0, [1.0], 0.1, 0.95, 1e-8)[0], abs=1e-15)

    def test_trajectory_matches_reference(self):
        gs = list(np.random.default_rng(3).standard_normal(50))
        ref = scalar_rmsprop(0.5, gs, 0.01, 0.9, 1e-8)
        p = MlpParameters((1, 1), [np.full((1, 1), 0.5)], [np.zeros(1)])
        opt = OptimizerState.for_params(p, lr=0.01, decay=0.9)
        for g, expect in zip(gs, ref):
            rmsprop_step(p, MlpParameters((1, 1), [np.full((1, 1), g)], [np.zeros(1)]), opt)
            assert p.weights[0][0, 0] == pytest.approx(expect, abs=1e-14)

    def test_shrinking_steps(self):
        p = MlpParameters((1, 1), [np.zeros((1, 1))], [np.zeros(1)])
        opt = OptimizerState.for_params(p, lr=0.1)
        g = MlpParameters((1, 1), [np.ones((1, 1))], [np.zeros(1)])
        rmsprop_step(p, g, opt)
        first = p.weights[0][0, 0]
        rmsprop_step(p, g, opt)
        assert abs(p.weights[0][0, 0] - first) < abs(first)

    @pytest.mark.parametrize("c", [1e-3, 1.0, 1e3])
    def test_step_size_self_normalizes(self, c):
        p = MlpParameters((1, 1), [np.zeros((1, 1))], [np.zeros(1)])
        opt = OptimizerState.for_params(p, lr=0.01)
        g = MlpParameters((1, 1), [np.full((1, 1), c)], [np.zeros(1)])
        for _ in range(500):
            prev = p.weights[0][0, 0]
            rmsprop_step(p, g, opt)
        assert abs(prev - p.weights[0][0, 0]) == pytest.approx(0.01, rel=0.05)

    def test_refuses_non_finite(self):
        p = random_net(0, (2, 2))
        g = p.zeros_like()
        g.weights[0][0, 0] = np.nan
        before = p.copy()
        with pytest.raises(NumericError):
            rmsprop_step(p, g, OptimizerState.for_params(p))
        assert p.equals(before)


class TestInit:
    def test_same_seed(self):
        assert init_weights((3, 8, 2), rng_stream(4, "init")).equals(init_weights((3, 8, 2), rng_stream(4, "init")))

    def test_zero_mean_and_zero_bias(self):
        p = init_weights((400, 250, 2), rng_stream(0, "init"))
        w = p.weights[0]
        assert abs(w.mean()) < 3 * w.std() / np.sqrt(w.size)
        assert all(np.all(b == 0) for b in p.biases)

    def test_variance_scales_with_fan_in(self):
        for fan_in in (10, 100, 1000):
            w = init_weights((fan_in, 500, 1), rng_stream(fan_in, "init")).weights[0]
            assert w.var() * fan_in == pytest.approx(2.0, rel=0.05)


def test_checkpoint_round_trip(tmp_path):
    for shared in (False, True):
        p = random_net(9, (4, 7, 3), shared)
        save_checkpoint(tmp_path / "p.bin", p)
        q = load_checkpoint(tmp_path / "p.bin")
        assert q.equals(p) and q.shared_output_bias == shared


def test_checkpoint_layout(tmp_path):
    p = MlpParameters((2, 1), [np.array([[1.5, -2.0]])], [np.array([0.25])])
    save_checkpoint(tmp_path / "p.bin", p)
    raw = (tmp_path / "p.bin").read_bytes()
    assert np.frombuffer(raw[:32], "<i8").tolist() == [2, 2, 1, 0]
    assert np.frombuffer(raw[32:], "<f8").tolist() == [1.5, -2.0, 0.25]
