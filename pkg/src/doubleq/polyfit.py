"""Overestimation from polynomial function approximation on a 1-D state space.

Every one of ten actions has the same true value V*(s). Each action's value
is fit by least squares to exact samples on a different subset of the
integer states -6..6, so the fits disagree away from their samples. The
max over actions is then biased upward, while evaluating the argmax action
with a second, differently sampled fit is much less biased.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import NumericError
from .bias_lab import DomainError

N_ACTIONS = 10
STATE_MIN, STATE_MAX = -6, 6
_SCALE = 6.0  # states are mapped to [-1, 1] before building the monomial basis

TRUE_FUNCTIONS = {
    "sine": np.sin,
    "gaussian-bump": lambda s: 2.0 * np.exp(-np.square(s)),
}

# (row, true function, degree) for the three experiment rows
CONFIGURATIONS = ((1, "sine", 6), (2, "gaussian-bump", 6), (3, "gaussian-bump", 9))


def true_value(kind: str, s):
    try:
        fn = TRUE_FUNCTIONS[kind]
    except KeyError:
        raise DomainError(f"unknown true function {kind!r}") from None
    return fn(np.asarray(s, dtype=float))


@dataclass(frozen=True)
class PolyEstimator:
    coefficients: np.ndarray  # in the rescaled variable s / 6, increasing powers
    degree: int
    states: tuple
    residual_ss: float
    action: int | None = None

    def __call__(self, s):
        return np.polynomial.polynomial.polyval(np.asarray(s, dtype=float) / _SCALE,
                                                self.coefficients)


def sample_states_for_action(i: int) -> list[int]:
    """Integer states sampled for action ``i`` (1-based).

    All of -6..6 except the adjacent pair ``i-6, i-5``; the endpoints are
    always kept.
    """
    if not 1 <= i <= N_ACTIONS:
        raise DomainError(f"action index must be in 1..{N_ACTIONS}, got {i}")
    return [s for s in range(STATE_MIN, STATE_MAX + 1) if s not in (i - 6, i - 5)]


def partner(i: int) -> int:
    """Action whose fit serves as the second estimate for action ``i`` (1-based)."""
    return i + 5 if i <= 5 else i - 5


def fit_polynomial(states, targets, d: int, action: int | None = None,
                   rcond: float = 1e-10) -> PolyEstimator:
    """Least-squares polynomial of degree ``d`` via Householder QR."""
    x = np.asarray(states, dtype=float)
    y = np.asarray(targets, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DomainError("states and targets must be 1-D and of equal length")
    if len(x) < d + 1:
        raise DomainError(f"need at least {d + 1} states for degree {d}, got {len(x)}")
    if len(np.unique(x)) != len(x):
        raise DomainError("states must be distinct")

    V = np.vander(x / _SCALE, d + 1, increasing=True)
    Q, R = np.linalg.qr(V)
    diag = np.abs(np.diag(R))
    if diag.min() <= rcond * diag.max():
        raise NumericError(f"degree {d} basis is rank deficient on the given states")
    coef = np.linalg.solve(R, Q.T @ y)
    resid = y - V @ coef
    return PolyEstimator(coef, d, tuple(states), float(resid @ resid), action)


def fit_actions(kind: str, d: int) -> list[PolyEstimator]:
    fits = []
    for i in range(1, N_ACTIONS + 1):
        s = sample_states_for_action(i)
        fits.append(fit_polynomial(s, true_value(kind, s), d, action=i))
    return fits


@dataclass(frozen=True)
class BiasCurves:
    states: np.ndarray
    v_true: np.ndarray
    estimates: np.ndarray  # (actions, grid)
    q_max: np.ndarray
    single_bias: np.ndarray
    double_bias: np.ndarray


def default_grid() -> np.ndarray:
    return np.linspace(STATE_MIN, STATE_MAX, 601)


def bias_curves(kind: str, d: int, grid=None) -> BiasCurves:
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    if grid.size and (grid.min() < STATE_MIN or grid.max() > STATE_MAX):
        raise DomainError(f"grid must lie within [{STATE_MIN}, {STATE_MAX}]")
    fits = fit_actions(kind, d)
    est = np.array([f(grid) for f in fits])
    v = true_value(kind, grid)
    chosen = np.argmax(est, axis=0)  # lowest index on ties
    second = np.array([partner(i + 1) - 1 for i in range(N_ACTIONS)])[chosen]
    cols = np.arange(grid.size)
    q_max = est[chosen, cols]
    return BiasCurves(grid, v, est, q_max, q_max - v, est[second, cols] - v)
