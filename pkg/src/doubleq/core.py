"""Shared types, toy environments, seeded streams and tie-breaking."""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np


class InvalidInputError(ValueError):
    """Malformed argument to a pure function (empty vector, NaN, ...)."""


class ConfigError(ValueError):
    """Invalid experiment or environment configuration."""


class NumericError(ArithmeticError):
    """A numerical procedure failed to converge or produced non-finite values."""


def argmax_tiebreak(values) -> int:
    """Index of the maximum, ties resolved to the lowest index.

    Raises InvalidInputError for an empty vector or any non-finite entry.
    """
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise InvalidInputError("argmax of an empty vector")
    if not np.all(np.isfinite(v)):
        raise InvalidInputError(f"non-finite entry in {v!r}")
    # np.argmax already returns the first occurrence of the maximum.
    return int(np.argmax(v))


# -- random streams ---------------------------------------------------------

# One independent stream per logical consumer, derived from the run seed.
STREAMS = ("env", "explore", "replay", "init", "coin", "eval", "mc")


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """Independent PCG64 generator for consumer ``name`` under ``seed``.

    The stream key is a CRC32 of the consumer name, so it is stable across
    interpreter runs (unlike ``hash``).
    """
    if not 0 <= seed < 2**64:
        raise ConfigError(f"seed must be a 64-bit unsigned integer, got {seed}")
    key = zlib.crc32(name.encode())
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, key])))


# -- environments -------------------------------------------------------------


class Outcome(NamedTuple):
    prob: float
    next_state: int
    terminal: bool
    reward_mean: float
    reward_std: float = 0.0


class Transition(NamedTuple):
    state: int
    action: int
    reward: float
    next_state: int
    terminal: bool


@dataclass(frozen=True)
class EnvModel:
    """Finite MDP with Gaussian reward noise.

    ``outcomes[s][a]`` lists the possible ``Outcome`` records of taking
    action ``a`` in state ``s``. Rewards are drawn as
    ``reward_mean + reward_std * N(0, 1)``.
    """

    kind: str
    state_count: int
    action_count: int
    outcomes: tuple[tuple[tuple[Outcome, ...], ...], ...]
    discount: float
    initial_state: int = 0
    max_steps: int = 100
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.state_count < 1 or self.action_count < 1:
            raise ConfigError("state_count and action_count must be positive")
        if not 0.0 <= self.discount <= 1.0:
            raise ConfigError(f"discount must lie in [0, 1], got {self.discount}")
        if len(self.outcomes) != self.state_count:
            raise ConfigError("outcomes must cover every state")
        for s, row in enumerate(self.outcomes):
            if len(row) != self.action_count:
                raise ConfigError(f"state {s} does not define every action")
            for a, dist in enumerate(row):
                total = sum(o.prob for o in dist)
                if abs(total - 1.0) > 1e-12:
                    raise ConfigError(f"probabilities of ({s}, {a}) sum to {total}")
                for o in dist:
                    if o.reward_std < 0 or not 0 <= o.next_state < self.state_count:
                        raise ConfigError(f"bad outcome {o} at ({s}, {a})")

    @property
    def stochastic(self) -> bool:
        return any(len(d) > 1 or d[0].reward_std > 0
                   for row in self.outcomes for d in row)

    def features(self, state: int) -> np.ndarray:
        """One-hot encoding used as network input."""
        x = np.zeros(self.state_count)
        x[state] = 1.0
        return x

    def expected_reward(self, state: int, action: int) -> float:
        return sum(o.prob * o.reward_mean for o in self.outcomes[state][action])

    def step(self, state: int, action: int, rng: np.random.Generator) -> Transition:
        dist = self.outcomes[state][action]
        if len(dist) == 1:
            o = dist[0]
        else:
            o = dist[rng.choice(len(dist), p=[d.prob for d in dist])]
        reward = o.reward_mean
        if o.reward_std > 0:
            reward += o.reward_std * rng.standard_normal()
        return Transition(state, action, float(reward), o.next_state, o.terminal)


ENV_KINDS = ("noisy-terminal", "chain", "noisy-chain")


def make_env(kind: str, *, actions: int | None = None, length: int = 3,
             means: Sequence[float] | float = 0.0, sigma: float = 1.0,
             step_reward: float = 1.0, goal_reward: float = 0.0,
             discount: float = 0.99, max_steps: int = 100) -> EnvModel:
    """Build one of the toy environments.

    noisy-terminal
        A single decision state; every action ends the episode with reward
        ``N(means[a], sigma**2)``. Default 10 actions.
    chain
        States ``0..length-1``. Action 0 moves forward and pays
        ``step_reward`` (plus ``goal_reward`` on the last move, which ends
        the episode); every other action steps back one state for no reward.
        Default 2 actions.
    noisy-chain
        As ``chain`` with ``N(0, sigma**2)`` noise on forward rewards.
    """
    if kind not in ENV_KINDS:
        raise ConfigError(f"unknown environment kind {kind!r}; expected one of {ENV_KINDS}")
    if sigma < 0:
        raise ConfigError(f"sigma must be nonnegative, got {sigma}")
    if max_steps < 1:
        raise ConfigError("max_steps must be positive")
    params = dict(kind=kind, actions=actions, length=length, sigma=sigma,
                  step_reward=step_reward, goal_reward=goal_reward,
                  discount=discount, max_steps=max_steps)

    if kind == "noisy-terminal":
        m = 10 if actions is None else actions
        if m < 1:
            raise ConfigError(f"action count must be positive, got {m}")
        mu = np.broadcast_to(np.asarray(means, dtype=float), (m,))
        row = tuple((Outcome(1.0, 0, True, float(mu[a]), sigma),) for a in range(m))
        params["means"] = mu.tolist()
        return EnvModel(kind, 1, m, (row,), discount, 0, max_steps, params)

    m = 2 if actions is None else actions
    if m < 1 or length < 1:
        raise ConfigError(f"chain needs positive length and action count, got L={length}, m={m}")
    noise = sigma if kind == "noisy-chain" else 0.0
    rows = []
    for s in range(length):
        last = s == length - 1
        fwd = Outcome(1.0, s if last else s + 1, last,
                      step_reward + (goal_reward if last else 0.0), noise)
        back = Outcome(1.0, max(s - 1, 0), False, 0.0, 0.0)
        rows.append(((fwd,),) + tuple((back,) for _ in range(m - 1)))
    return EnvModel(kind, length, m, tuple(rows), discount, 0, max_steps, params)


def bellman_backup(env: EnvModel, q: np.ndarray, gamma: float | None = None) -> np.ndarray:
    gamma = env.discount if gamma is None else gamma
    v = q.max(axis=1)
    out = np.empty_like(q)
    for s in range(env.state_count):
        for a in range(env.action_count):
            out[s, a] = sum(o.prob * (o.reward_mean + (0.0 if o.terminal else gamma * v[o.next_state]))
                            for o in env.outcomes[s][a])
    return out


def true_optimal_values(env: EnvModel, tol: float = 1e-12, max_iter: int = 100_000) -> np.ndarray:
    """Q* by value iteration on the known model, shape (states, actions)."""
    q = np.zeros((env.state_count, env.action_count))
    for _ in range(max_iter):
        new = bellman_backup(env, q)
        if np.max(np.abs(new - q)) <= tol:
            return new
        q = new
    raise NumericError(f"value iteration did not converge in {max_iter} sweeps")


def policy_return(env: EnvModel, policy: Sequence[int], gamma: float | None = None,
                  horizon: int | None = None) -> float:
    """Expected discounted return of a deterministic policy from the start state.

    Episodes are truncated after ``horizon`` steps (default ``env.max_steps``),
    matching the rollout cap, so the value is finite even for looping policies.
    """
    gamma = env.discount if gamma is None else gamma
    horizon = env.max_steps if horizon is None else horizon
    v = np.zeros(env.state_count)
    for _ in range(horizon):
        nv = np.empty_like(v)
        for s in range(env.state_count):
            nv[s] = sum(o.prob * (o.reward_mean + (0.0 if o.terminal else gamma * v[o.next_state]))
                        for o in env.outcomes[s][policy[s]])
        if np.array_equal(nv, v):
            break  # fixed point: further steps add nothing
        v = nv
    return float(v[env.initial_state])
