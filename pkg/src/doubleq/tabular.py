"""Tabular Q-learning and Double Q-learning."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ConfigError, EnvModel, Transition, argmax_tiebreak, policy_return, rng_stream


@dataclass
class QTable:
    values: np.ndarray
    alpha: float = 0.1

    @classmethod
    def zeros(cls, env: EnvModel, alpha: float = 0.1) -> "QTable":
        return cls(np.zeros((env.state_count, env.action_count)), alpha)

    def copy(self) -> "QTable":
        return QTable(self.values.copy(), self.alpha)


@dataclass
class DoubleQTables:
    a: QTable
    b: QTable

    @classmethod
    def zeros(cls, env: EnvModel, alpha: float = 0.1) -> "DoubleQTables":
        return cls(QTable.zeros(env, alpha), QTable.zeros(env, alpha))

    def mean_values(self) -> np.ndarray:
        return 0.5 * (self.a.values + self.b.values)


def q_target(r: float, gamma: float, next_values, terminal: bool) -> float:
    if terminal:
        return float(r)
    return float(r + gamma * np.max(next_values))


def q_update(table: QTable, t: Transition, gamma: float) -> QTable:
    """In-place Q-learning update of the single visited cell. Returns ``table``."""
    y = q_target(t.reward, gamma, table.values[t.next_state], t.terminal)
    q = table.values[t.state, t.action]
    table.values[t.state, t.action] = q + table.alpha * (y - q)
    return table


def double_q_target(selector: QTable, evaluator: QTable, t: Transition, gamma: float) -> float:
    """Target with the action chosen by ``selector`` and valued by ``evaluator``."""
    if t.terminal:
        return float(t.reward)
    a = argmax_tiebreak(selector.values[t.next_state])
    return float(t.reward + gamma * evaluator.values[t.next_state, a])


def double_q_update(tables: DoubleQTables, t: Transition, gamma: float,
                    rng: np.random.Generator) -> DoubleQTables:
    """Update one table, picked by a fair coin, toward the cross-evaluated target."""
    if rng.random() < 0.5:
        chosen, other = tables.a, tables.b
    else:
        chosen, other = tables.b, tables.a
    y = double_q_target(chosen, other, t, gamma)
    q = chosen.values[t.state, t.action]
    chosen.values[t.state, t.action] = q + chosen.alpha * (y - q)
    return tables


def epsilon_greedy(values, eps: float, rng: np.random.Generator) -> int:
    if not 0.0 <= eps <= 1.0:
        raise ConfigError(f"epsilon must lie in [0, 1], got {eps}")
    # Always consume the same number of draws so streams stay aligned across runs.
    explore = rng.random() < eps
    random_action = int(rng.integers(len(values)))
    return random_action if explore else argmax_tiebreak(values)


def linear_schedule(start: float, end: float, steps: int):
    """``t -> value`` interpolating from start to end over ``steps`` then flat."""
    if steps < 0:
        raise ConfigError("schedule length must be nonnegative")

    def value(t: int) -> float:
        if steps == 0 or t >= steps:
            return end
        return start + (end - start) * t / steps

    return value


@dataclass
class TabularSchedule:
    """Exploration and step-size schedule, indexed by episode."""

    epsilon_start: float = 0.1
    epsilon_end: float = 0.1
    epsilon_episodes: int = 0
    alpha: float = 0.1
    alpha_decay: float = 0.0  # alpha_k = alpha / (1 + alpha_decay * k)

    def __post_init__(self):
        for e in (self.epsilon_start, self.epsilon_end):
            if not 0.0 <= e <= 1.0:
                raise ConfigError(f"epsilon must lie in [0, 1], got {e}")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.alpha_decay < 0 or self.epsilon_episodes < 0:
            raise ConfigError("decay and schedule length must be nonnegative")

    def epsilon(self, episode: int) -> float:
        return linear_schedule(self.epsilon_start, self.epsilon_end, self.epsilon_episodes)(episode)

    def step_size(self, episode: int) -> float:
        return self.alpha / (1.0 + self.alpha_decay * episode)


@dataclass
class TabularTrace:
    algo: str
    seed: int
    start_value_estimate: list = field(default_factory=list)
    greedy_return: list = field(default_factory=list)

    def rows(self):
        for k, (v, g) in enumerate(zip(self.start_value_estimate, self.greedy_return)):
            yield dict(episode=k + 1, algo=self.algo, seed=self.seed,
                       start_value_estimate=v, greedy_return=g)


def double_value_estimate(tables: DoubleQTables, state: int) -> float:
    """Average of the two cross evaluations of the greedy actions at ``state``."""
    qa, qb = tables.a.values[state], tables.b.values[state]
    return 0.5 * (qb[argmax_tiebreak(qa)] + qa[argmax_tiebreak(qb)])


def train_tabular(env: EnvModel, algo: str, episodes: int, schedule: TabularSchedule | None = None,
                  seed: int = 0, gamma: float | None = None):
    """Run ``episodes`` episodes of Q-learning (``"q"``) or Double Q-learning (``"double-q"``).

    Returns ``(trace, learner)``. After every episode the trace records the
    start-state value estimate (max over actions for Q-learning, averaged
    cross evaluation for Double Q) and the exact discounted return of the
    current greedy policy.
    """
    if algo not in ("q", "double-q"):
        raise ConfigError(f"unknown tabular algorithm {algo!r}")
    if episodes < 1:
        raise ConfigError("episodes must be positive")
    schedule = TabularSchedule() if schedule is None else schedule
    gamma = env.discount if gamma is None else gamma
    env_rng = rng_stream(seed, "env")
    explore_rng = rng_stream(seed, "explore")
    coin_rng = rng_stream(seed, "coin")

    if algo == "q":
        learner = QTable.zeros(env, schedule.alpha)
    else:
        learner = DoubleQTables.zeros(env, schedule.alpha)
    trace = TabularTrace(algo, seed)

    for episode in range(episodes):
        eps = schedule.epsilon(episode)
        alpha = schedule.step_size(episode)
        if algo == "q":
            learner.alpha = alpha
        else:
            learner.a.alpha = learner.b.alpha = alpha

        s = env.initial_state
        for _ in range(env.max_steps):
            values = learner.values[s] if algo == "q" else learner.mean_values()[s]
            a = epsilon_greedy(values, eps, explore_rng)
            t = env.step(s, a, env_rng)
            if algo == "q":
                q_update(learner, t, gamma)
            else:
                double_q_update(learner, t, gamma, coin_rng)
            if t.terminal:
                break
            s = t.next_state

        table = learner.values if algo == "q" else learner.mean_values()
        if algo == "q":
            estimate = float(table[env.initial_state].max())
        else:
            estimate = double_value_estimate(learner, env.initial_state)
        policy = [argmax_tiebreak(row) for row in table]
        trace.start_value_estimate.append(estimate)
        trace.greedy_return.append(policy_return(env, policy, gamma))
    return trace, learner
