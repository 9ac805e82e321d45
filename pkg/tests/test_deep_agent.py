import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from doubleq.core import ConfigError, NumericError, Transition, make_env, rng_stream
from doubleq.deep_agent import (ATARI_SCALE, AgentConfig, AgentNets, ReplayBuffer, batch_targets,
                                double_dqn_target, dqn_target, start_value_estimate, sync_target, train_deep)
from doubleq.neural import ShapeError, forward, init_weights, load_checkpoint
from oracles import clipped_normal_mean

values = st.lists(st.floats(-100, 100), min_size=1, max_size=8)


def tr(i):
    return Transition(i, 0, float(i), i, False)


class TestTargets:
    def test_dqn_example(self):
        assert dqn_target(1.0, 0.99, [2.0, 3.0], False) == pytest.approx(3.97)

    def test_double_example(self):
        assert double_dqn_target(1.0, 0.99, [5.0, 1.0], [2.0, 3.0], False) == pytest.approx(2.98)

    def test_terminal(self):
        assert dqn_target(1.0, 0.99, [2.0, 3.0], True) == 1.0
        assert double_dqn_target(1.0, 0.99, [5.0, 1.0], [2.0, 3.0], True) == 1.0

    def test_zero_discount(self):
        assert dqn_target(0.7, 0.0, [2.0, 3.0], False) == 0.7

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            double_dqn_target(0.0, 0.9, [1.0, 2.0], [1.0], False)

    @given(st.floats(-10, 10), st.floats(0, 1), values)
    def test_same_values_revert(self, r, g, q):
        assert double_dqn_target(r, g, q, q, False) == dqn_target(r, g, q, False)

    @given(st.floats(-10, 10), st.floats(0, 1), st.data())
    def test_dominance(self, r, g, data):
        target = data.draw(values)
        online = data.draw(st.lists(st.floats(-100, 100), min_size=len(target), max_size=len(target)))
        d = double_dqn_target(r, g, online, target, False)
        assert d <= dqn_target(r, g, target, False)
        if target[int(np.argmax(online))] == max(target):
            assert d == dqn_target(r, g, target, False)

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(0)
        r, on, tg = rng.standard_normal(20), rng.standard_normal((20, 4)), rng.standard_normal((20, 4))
        done = rng.random(20) < 0.3
        np.testing.assert_allclose(batch_targets("dqn", r, 0.9, on, tg, done),
                                   [dqn_target(*a) for a in zip(r, [0.9] * 20, tg, done)])
        np.testing.assert_allclose(batch_targets("double-dqn", r, 0.9, on, tg, done),
                                   [double_dqn_target(*a) for a in zip(r, [0.9] * 20, on, tg, done)])


class TestReplay:
    def test_fifo(self):
        buf = ReplayBuffer(2)
        for i in range(3):
            buf.push(tr(i))
        assert buf.contents() == [tr(1), tr(2)]

    def test_one_push(self):
        assert len(ReplayBuffer(5).push(tr(0))) == 1

    def test_capacity(self):
        buf = ReplayBuffer(10_000)
        for i in range(100_000):
            buf.push(tr(i))
        assert len(buf) == 10_000 and buf.contents()[0] == tr(90_000)

    def test_single_item(self):
        buf = ReplayBuffer(4).push(tr(7))
        assert buf.sample(3, np.random.default_rng(0)) == [tr(7)] * 3

    def test_empty(self):
        with pytest.raises(ValueError):
            ReplayBuffer(3).sample(1, np.random.default_rng(0))

    def test_uniform(self):
        buf = ReplayBuffer(10)
        for i in range(25):
            buf.push(tr(i))
        n = 10**6
        draws = [t.state for t in buf.sample(n, rng_stream(0, "replay"))]
        freq = np.bincount(draws, minlength=25)[15:] / n
        assert np.all(np.abs(freq - 0.1) < 3 * np.sqrt(0.1 * 0.9 / n))

    def test_seeded(self):
        buf = ReplayBuffer(10)
        for i in range(10):
            buf.push(tr(i))
        assert buf.sample(50, rng_stream(1, "replay")) == buf.sample(50, rng_stream(1, "replay"))


class TestSync:
    def nets(self):
        p = init_weights((6, 16, 3), rng_stream(0, "init"))
        return AgentNets(p, init_weights((6, 16, 3), rng_stream(1, "init")))

    def test_bitwise(self):
        nets = sync_target(self.nets())
        x = np.random.default_rng(0).standard_normal((100, 6))
        assert np.array_equal(forward(nets.online, x), forward(nets.target, x))
        assert nets.steps_since_sync == 0

    def test_targets_coincide_after_sync(self):
        nets = sync_target(self.nets())
        x = np.random.default_rng(1).standard_normal((50, 6))
        on, tg = forward(nets.online, x), forward(nets.target, x)
        r = np.ones(50)
        done = np.zeros(50, bool)
        assert np.array_equal(batch_targets("dqn", r, 0.9, on, tg, done),
                              batch_targets("double-dqn", r, 0.9, on, tg, done))

    def test_target_unchanged_by_online_updates(self):
        nets = sync_target(self.nets())
        frozen = nets.target.copy()
        nets.online.weights[0] += 1.0
        assert nets.target.equals(frozen)

    def test_start_estimates_agree_after_sync(self):
        nets = sync_target(self.nets())
        x = np.eye(6)[0]
        assert start_value_estimate("dqn", nets, x) == start_value_estimate("double-dqn", nets, x)


class TestConfig:
    def test_epsilon_schedule(self):
        cfg = AgentConfig(epsilon_anneal=1000)
        assert cfg.epsilon(0) == 1.0
        assert cfg.epsilon(500) == pytest.approx(0.55)
        assert cfg.epsilon(1000) == cfg.epsilon(10**6) == pytest.approx(0.1)

    def test_tuned(self):
        t = ATARI_SCALE.tuned()
        assert (t.target_period, t.epsilon_end, t.eval_epsilon, t.shared_output_bias) == (30_000, 0.01, 0.001, True)

    def test_atari_scale(self):
        assert (ATARI_SCALE.gamma, ATARI_SCALE.lr, ATARI_SCALE.minibatch, ATARI_SCALE.update_every) == (0.99, 0.00025, 32, 4)

    @pytest.mark.parametrize("kw", [dict(target_period=0), dict(minibatch=20, replay_capacity=10),
                                    dict(epsilon_end=1.5), dict(eval_epsilon=-0.1), dict(gamma=2.0)])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            AgentConfig(**kw)


class TestTraining:
    def test_deterministic(self):
        env = make_env("noisy-terminal", actions=4)
        cfg = AgentConfig(eval_every=200)
        a, na = train_deep(env, "double-dqn", cfg, steps=600, seed=3)
        b, nb = train_deep(env, "double-dqn", cfg, steps=600, seed=3)
        assert list(a.rows()) == list(b.rows())
        assert na.online.equals(nb.online)
        assert a.step == [200, 400, 600]

    def test_target_staleness(self):
        env = make_env("chain", length=3, discount=0.5)
        cfg = AgentConfig(target_period=10**6, learn_start=8, minibatch=8)
        _, nets = train_deep(env, "dqn", cfg, steps=400, seed=0)
        init = init_weights((3, 64, 2), rng_stream(0, "init"))
        assert nets.target.equals(init) and not nets.online.equals(init)

    def test_checkpoints(self, tmp_path):
        env = make_env("chain", length=3, discount=0.5)
        _, nets = train_deep(env, "dqn", AgentConfig(eval_every=100), steps=200, seed=0, checkpoint_dir=tmp_path)
        assert sorted(p.name for p in tmp_path.iterdir()) == ["step_100.bin", "step_200.bin"]
        assert load_checkpoint(tmp_path / "step_200.bin").equals(nets.online)

    def test_divergence_leaves_checkpoint(self, tmp_path):
        env = make_env("noisy-terminal", actions=2, means=[1e300, 0.0], sigma=0.0)
        cfg = AgentConfig(clip_rewards=False, learn_start=4, minibatch=4, lr=1.0)
        with pytest.raises(NumericError):
            train_deep(env, "dqn", cfg, steps=2000, seed=0, checkpoint_dir=tmp_path)
        assert any(p.name.startswith("diverged_step_") for p in tmp_path.iterdir())

    @pytest.mark.parametrize("algo", ["dqn", "double-dqn"])
    def test_zero_discount_learns_clipped_means(self, algo):
        means = [0.5, -0.3, 2.0]
        env = make_env("noisy-terminal", actions=3, means=means, sigma=1.0, discount=0.0)
        cfg = AgentConfig(lr=1e-4, epsilon_start=1.0, epsilon_end=1.0, eval_every=10**9)
        _, nets = train_deep(env, algo, cfg, steps=50_000, seed=0)
        truth = [clipped_normal_mean(m, 1.0) for m in means]
        np.testing.assert_allclose(forward(nets.online, np.ones(1)), truth, atol=0.05)

    def test_unknown_algo(self):
        with pytest.raises(ConfigError):
            train_deep(make_env("chain"), "sarsa")
