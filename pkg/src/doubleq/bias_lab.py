"""Overestimation of the max operator under estimation error.

Closed forms for the single (max) estimator's bias under zero-sum and
uniform errors, a tight worst case construction, and Monte Carlo estimators
of single- and double-estimator bias.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import InvalidInputError, rng_stream

NOISES = ("standard-normal", "uniform")
_CHUNK = 100_000  # repetitions per vectorized block


class DomainError(InvalidInputError):
    pass


@dataclass(frozen=True)
class ErrorVector:
    errors: np.ndarray
    mean_square: float

    @property
    def m(self) -> int:
        return len(self.errors)


@dataclass(frozen=True)
class BiasEstimate:
    mean: float
    stderr: float
    reps: int


def _check_cm(C, m):
    if not C > 0:
        raise DomainError(f"mean square C must be positive, got {C}")
    if m < 2:
        raise DomainError(f"need at least two actions, got m={m}")


def max_error_lower_bound(C: float, m: int) -> float:
    """Smallest possible max_a eps_a given sum(eps) = 0 and mean(eps**2) = C."""
    _check_cm(C, m)
    return math.sqrt(C / (m - 1))


def tight_error_vector(C: float, m: int) -> ErrorVector:
    """Errors attaining the lower bound: m-1 equal positives, one large negative."""
    _check_cm(C, m)
    eps = np.full(m, max_error_lower_bound(C, m))
    eps[-1] = -math.sqrt((m - 1) * C)
    return ErrorVector(eps, C)


def verify_error_constraints(e: ErrorVector, tol: float = 1e-9) -> bool:
    eps = np.asarray(e.errors, dtype=float)
    return bool(abs(eps.sum()) <= tol and abs(np.mean(eps**2) - e.mean_square) <= tol)


def double_estimate_error_example(C: float, m: int) -> tuple[ErrorVector, float]:
    """Errors satisfying the zero-sum constraints whose double estimate is exact.

    The first action is overestimated by sqrt(C (m-1)) and selected, the
    rest sit at -sqrt(C / (m-1)). The second estimate of the selected action
    equals the true value, so the returned error is 0.
    """
    _check_cm(C, m)
    eps = np.full(m, -math.sqrt(C / (m - 1)))
    eps[0] = math.sqrt(C * (m - 1))
    second = np.zeros(m)  # only the selected entry matters; the rest are arbitrary
    return ErrorVector(eps, C), float(second[int(np.argmax(eps))])


def sample_constrained_errors(C: float, m: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` random error vectors with zero sum and mean square C, shape (n, m).

    Normal draws are centred and rescaled. Degenerate (all zero after
    centring) draws are redrawn.
    """
    _check_cm(C, m)
    out = np.empty((n, m))
    filled = 0
    while filled < n:
        x = rng.standard_normal((n - filled, m))
        x -= x.mean(axis=1, keepdims=True)
        ms = np.mean(x**2, axis=1)
        x = x[ms > 1e-300]
        x *= np.sqrt(C / np.mean(x**2, axis=1))[:, None]
        out[filled:filled + len(x)] = x
        filled += len(x)
    return out


def uniform_error_overoptimism(m: int) -> float:
    """E[max of m iid uniform(-1, 1)] = (m-1)/(m+1)."""
    if m < 1:
        raise DomainError(f"m must be at least 1, got {m}")
    return (m - 1) / (m + 1)


def uniform_max_cdf(x: float, m: int) -> float:
    if x <= -1.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    return ((1.0 + x) / 2.0) ** m


def thrun_schwartz_upper_bound(gamma: float, eps: float, m: int) -> float:
    """Upper bound on the target overestimation for uniform errors in [-eps, eps]."""
    if not 0.0 <= gamma <= 1.0:
        raise DomainError(f"gamma must lie in [0, 1], got {gamma}")
    if eps < 0:
        raise DomainError(f"eps must be nonnegative, got {eps}")
    return gamma * eps * uniform_error_overoptimism(m)


def _draw(noise: str, rng: np.random.Generator, shape) -> np.ndarray:
    if noise == "standard-normal":
        return rng.standard_normal(shape)
    if noise == "uniform":
        return rng.uniform(-1.0, 1.0, shape)
    raise DomainError(f"unknown noise {noise!r}; expected one of {NOISES}")


def _monte_carlo(noise, m, reps, rng, double):
    if m < 1 or reps < 1:
        raise DomainError(f"need m >= 1 and reps >= 1, got m={m}, reps={reps}")
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < reps:
        k = min(_CHUNK, reps - done)
        eps = _draw(noise, rng, (k, m))
        if double:
            second = _draw(noise, rng, (k, m))
            # np.argmax picks the lowest index on ties, same as argmax_tiebreak
            x = second[np.arange(k), np.argmax(eps, axis=1)]
        else:
            x = eps.max(axis=1)
        total += x.sum()
        total_sq += np.dot(x, x)
        done += k
    mean = total / reps
    var = (total_sq - reps * mean**2) / (reps - 1) if reps > 1 else 0.0
    return BiasEstimate(float(mean), math.sqrt(max(var, 0.0) / reps), reps)


def monte_carlo_single_max_bias(noise: str, m: int, reps: int,
                                rng: np.random.Generator) -> BiasEstimate:
    """Bias of max_a Q(s, a) when Q(s, a) = V*(s) + eps_a with iid noise."""
    return _monte_carlo(noise, m, reps, rng, double=False)


def monte_carlo_double_bias(noise: str, m: int, reps: int,
                            rng: np.random.Generator) -> BiasEstimate:
    """Bias of Q'(s, argmax_a Q(s, a)) with Q and Q' independent noisy copies."""
    return _monte_carlo(noise, m, reps, rng, double=True)


def bias_bars(m_max: int, reps: int, seed: int, noise: str = "standard-normal") -> list[dict]:
    """Single and double estimator bias for m = 1..m_max (one stream per bar)."""
    rows = []
    for m in range(1, m_max + 1):
        for estimator, fn in (("single", monte_carlo_single_max_bias),
                              ("double", monte_carlo_double_bias)):
            est = fn(noise, m, reps, rng_stream(seed, f"mc/{estimator}/{m}"))
            rows.append(dict(m=m, estimator=estimator, mean_bias=est.mean,
                             stderr=est.stderr, reps=reps, seed=seed))
    return rows
