"""DQN and Double DQN on the toy environments.

Both agents share everything (replay memory, target network, optimizer,
exploration) except the bootstrap target: DQN evaluates the target
network's own greedy action, Double DQN evaluates the online network's
greedy action with the target network.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .core import ConfigError, EnvModel, NumericError, Transition, argmax_tiebreak, policy_return, rng_stream
from .neural import (MlpParameters, OptimizerState, ShapeError, backward, forward, init_weights,
                     rmsprop_step, save_checkpoint)
from .tabular import epsilon_greedy, linear_schedule

log = logging.getLogger(__name__)

ALGOS = ("dqn", "double-dqn")


def dqn_target(r: float, gamma: float, target_next, terminal: bool) -> float:
    if terminal:
        return float(r)
    return float(r + gamma * np.max(target_next))


def double_dqn_target(r: float, gamma: float, online_next, target_next, terminal: bool) -> float:
    online_next = np.asarray(online_next, dtype=float)
    target_next = np.asarray(target_next, dtype=float)
    if online_next.shape != target_next.shape:
        raise ShapeError(f"value vectors differ in length: {online_next.shape} vs {target_next.shape}")
    if terminal:
        return float(r)
    return float(r + gamma * target_next[argmax_tiebreak(online_next)])


def batch_targets(algo, rewards, gamma, online_next, target_next, terminals) -> np.ndarray:
    """Vectorized targets for a minibatch; rows of the value matrices are next states."""
    if algo == "dqn":
        boot = target_next.max(axis=1)
    else:
        boot = target_next[np.arange(len(rewards)), np.argmax(online_next, axis=1)]
    return rewards + gamma * np.where(terminals, 0.0, boot)


class ReplayBuffer:
    """Fixed-capacity FIFO store of transitions with uniform sampling."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ConfigError("replay capacity must be positive")
        self.capacity = capacity
        self._items: list = [None] * capacity
        self.insertions = 0

    def __len__(self):
        return min(self.insertions, self.capacity)

    def push(self, t: Transition) -> "ReplayBuffer":
        self._items[self.insertions % self.capacity] = t
        self.insertions += 1
        return self

    def contents(self) -> list:
        """Stored transitions, oldest first."""
        n = len(self)
        start = self.insertions - n
        return [self._items[(start + i) % self.capacity] for i in range(n)]

    def sample(self, k: int, rng: np.random.Generator) -> list:
        """``k`` draws with replacement, uniform over the current contents."""
        n = len(self)
        if n == 0:
            raise ValueError("cannot sample from an empty replay buffer")
        # Slots 0..n-1 hold exactly the current contents in both fill phases.
        return [self._items[i] for i in rng.integers(n, size=k)]


@dataclass
class AgentConfig:
    """Training hyper-parameters at desk scale.

    ``ATARI_SCALE`` holds the values used for the Atari experiments. ``gamma``
    of None means the environment's own discount.
    """

    gamma: float | None = None
    lr: float = 0.00025
    rms_decay: float = 0.95
    rms_damping: float = 1e-8
    target_period: int = 1_000
    replay_capacity: int = 10_000
    minibatch: int = 32
    update_every: int = 4
    learn_start: int = 32
    epsilon_start: float = 1.0
    epsilon_end: float = 0.1
    epsilon_anneal: int = 10_000
    eval_epsilon: float = 0.05
    eval_every: int = 1_000
    hidden: tuple = (64,)
    shared_output_bias: bool = False
    clip_rewards: bool = True
    huber: bool = False

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.target_period < 1:
            raise ConfigError("target_period must be at least 1")
        if self.minibatch < 1 or self.minibatch > self.replay_capacity:
            raise ConfigError("minibatch must be in 1..replay_capacity")
        if self.update_every < 1 or self.eval_every < 1 or self.epsilon_anneal < 0:
            raise ConfigError("update_every and eval_every must be positive")
        for name in ("epsilon_start", "epsilon_end", "eval_epsilon"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.gamma is not None and not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("gamma must lie in [0, 1]")
        if not self.lr > 0 or not 0.0 <= self.rms_decay < 1.0 or not self.rms_damping > 0:
            raise ConfigError("invalid optimizer settings")

    def tuned(self) -> "AgentConfig":
        """The tuned Double DQN variant: 3x target period, less exploration, shared output bias."""
        return replace(self, target_period=3 * self.target_period, epsilon_end=0.01,
                       eval_epsilon=0.001, shared_output_bias=True)

    def epsilon(self, step: int) -> float:
        return linear_schedule(self.epsilon_start, self.epsilon_end, self.epsilon_anneal)(step)

    def as_dict(self) -> dict:
        return asdict(self)


ATARI_SCALE = AgentConfig(gamma=0.99, lr=0.00025, target_period=10_000, replay_capacity=1_000_000,
                          minibatch=32, update_every=4, learn_start=32, epsilon_start=1.0,
                          epsilon_end=0.1, epsilon_anneal=1_000_000, eval_epsilon=0.05,
                          eval_every=1_000_000)


@dataclass
class AgentNets:
    online: MlpParameters
    target: MlpParameters
    steps_since_sync: int = 0


def sync_target(nets: AgentNets) -> AgentNets:
    nets.target = nets.online.copy()
    nets.steps_since_sync = 0
    return nets


def start_value_estimate(algo: str, nets: AgentNets, x) -> float:
    """The agent's own estimate of a state's value.

    DQN reads the online network's max; Double DQN evaluates the online
    greedy action with the target network.
    """
    q = forward(nets.online, x)
    if algo == "dqn":
        return float(q.max())
    return float(forward(nets.target, x)[argmax_tiebreak(q)])


def greedy_policy(env: EnvModel, params: MlpParameters) -> list[int]:
    q = forward(params, np.eye(env.state_count))
    return [argmax_tiebreak(row) for row in q]


@dataclass
class DeepTrace:
    algo: str
    seed: int
    step: list = field(default_factory=list)
    value_estimate: list = field(default_factory=list)
    greedy_return: list = field(default_factory=list)
    epsilon: list = field(default_factory=list)
    loss: list = field(default_factory=list)

    COLUMNS = ("step", "value_estimate", "greedy_return", "epsilon", "loss")

    def rows(self):
        for vals in zip(*(getattr(self, c) for c in self.COLUMNS)):
            yield dict(zip(self.COLUMNS, vals))


def train_deep(env: EnvModel, algo: str, cfg: AgentConfig | None = None, steps: int = 50_000,
               seed: int = 0, checkpoint_dir=None):
    """Train DQN (``"dqn"``) or Double DQN (``"double-dqn"``) for ``steps`` environment steps.

    Returns ``(trace, nets)``. Every ``cfg.eval_every`` steps (and at the end)
    the trace records the start-state value estimate, the exact return of the
    online network's greedy policy, the current exploration rate and the mean
    minibatch loss since the previous record. With ``checkpoint_dir`` set,
    the online network is saved at each record as ``step_<n>.bin``.
    """
    if algo not in ALGOS:
        raise ConfigError(f"unknown algorithm {algo!r}; expected one of {ALGOS}")
    if steps < 1:
        raise ConfigError("steps must be positive")
    cfg = AgentConfig() if cfg is None else cfg
    gamma = env.discount if cfg.gamma is None else cfg.gamma

    env_rng = rng_stream(seed, "env")
    explore_rng = rng_stream(seed, "explore")
    replay_rng = rng_stream(seed, "replay")
    sizes = (env.state_count, *cfg.hidden, env.action_count)
    online = init_weights(sizes, rng_stream(seed, "init"), cfg.shared_output_bias)
    nets = sync_target(AgentNets(online, online.copy()))
    opt = OptimizerState.for_params(online, cfg.lr, cfg.rms_decay, cfg.rms_damping)
    buf = ReplayBuffer(cfg.replay_capacity)
    eye = np.eye(env.state_count)
    x0 = eye[env.initial_state]
    ckpt = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if ckpt is not None:
        ckpt.mkdir(parents=True, exist_ok=True)

    trace = DeepTrace(algo, seed)
    losses: list[float] = []
    s, episode_len = env.initial_state, 0

    for step in range(1, steps + 1):
        eps = cfg.epsilon(step - 1)
        a = epsilon_greedy(forward(nets.online, eye[s]), eps, explore_rng)
        t = env.step(s, a, env_rng)
        if cfg.clip_rewards:
            t = t._replace(reward=float(np.clip(t.reward, -1.0, 1.0)))
        buf.push(t)
        episode_len += 1
        if t.terminal or episode_len >= env.max_steps:
            s, episode_len = env.initial_state, 0
        else:
            s = t.next_state

        if step % cfg.update_every == 0 and len(buf) >= cfg.learn_start:
            batch = buf.sample(cfg.minibatch, replay_rng)
            losses.append(_learn(algo, nets, opt, batch, gamma, eye, cfg.huber))
            if not math.isfinite(losses[-1]):
                if ckpt is not None:
                    save_checkpoint(ckpt / f"diverged_step_{step}.bin", nets.online)
                raise NumericError(f"non-finite loss at step {step}")

        if step % cfg.eval_every == 0 or step == steps:
            trace.step.append(step)
            trace.value_estimate.append(start_value_estimate(algo, nets, x0))
            trace.greedy_return.append(policy_return(env, greedy_policy(env, nets.online), gamma))
            trace.epsilon.append(eps)
            trace.loss.append(float(np.mean(losses)) if losses else float("nan"))
            losses = []
            if ckpt is not None:
                save_checkpoint(ckpt / f"step_{step}.bin", nets.online)
            log.debug("%s step %d value %.4f return %.4f", algo, step,
                      trace.value_estimate[-1], trace.greedy_return[-1])

        nets.steps_since_sync += 1
        if nets.steps_since_sync >= cfg.target_period:
            sync_target(nets)
    return trace, nets


def _learn(algo, nets, opt, batch, gamma, eye, huber) -> float:
    """One RMSProp step on the squared TD error of a minibatch; returns the loss."""
    s = np.array([t.state for t in batch])
    a = np.array([t.action for t in batch])
    r = np.array([t.reward for t in batch])
    s2 = np.array([t.next_state for t in batch])
    done = np.array([t.terminal for t in batch])

    x2 = eye[s2]
    # Targets are constants: no gradient flows into the target network.
    y = batch_targets(algo, r, gamma, forward(nets.online, x2), forward(nets.target, x2), done)
    x = eye[s]
    q = forward(nets.online, x)
    rows = np.arange(len(batch))
    err = q[rows, a] - y
    with np.errstate(over="ignore", invalid="ignore"):
        loss = 0.5 * float(np.mean(err**2))
    if not math.isfinite(loss):
        return loss
    if huber:
        err = np.clip(err, -1.0, 1.0)
    g = np.zeros_like(q)
    g[rows, a] = err / len(batch)
    rmsprop_step(nets.online, backward(nets.online, x, g), opt)
    return loss
