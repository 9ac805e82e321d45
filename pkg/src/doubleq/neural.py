"""Small fully connected Q-network in plain numpy.

Hidden layers use rectifiers; the output layer is linear with one unit per
action. Weights are stored as ``(fan_out, fan_in)`` matrices so that row
``a`` of the last matrix belongs to action ``a``.

Checkpoint format (all little-endian)::

    int64  k                      number of layer sizes
    int64  sizes[k]               n, hidden..., m
    int64  shared_output_bias     0 or 1
    float64 params[...]           W0 (row-major), b0, W1, b1, ...

With ``shared_output_bias`` the last bias vector has length 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import InvalidInputError, NumericError


class ShapeError(InvalidInputError):
    pass


@dataclass
class MlpParameters:
    sizes: tuple
    weights: list
    biases: list
    shared_output_bias: bool = False

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        if len(self.sizes) < 2 or min(self.sizes) < 1:
            raise ShapeError(f"invalid layer sizes {self.sizes}")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            out, inp = self.sizes[k + 1], self.sizes[k]
            last = k == len(self.sizes) - 2
            nb = 1 if (last and self.shared_output_bias) else out
            if w.shape != (out, inp) or b.shape != (nb,):
                raise ShapeError(f"layer {k}: got W{w.shape}, b{b.shape}")

    @property
    def n_inputs(self) -> int:
        return self.sizes[0]

    @property
    def n_actions(self) -> int:
        return self.sizes[-1]

    def arrays(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "MlpParameters":
        return MlpParameters(self.sizes, [w.copy() for w in self.weights],
                             [b.copy() for b in self.biases], self.shared_output_bias)

    def zeros_like(self) -> "MlpParameters":
        return MlpParameters(self.sizes, [np.zeros_like(w) for w in self.weights],
                             [np.zeros_like(b) for b in self.biases], self.shared_output_bias)

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def equals(self, other: "MlpParameters") -> bool:
        """Bitwise equality of all parameters."""
        return (self.sizes == other.sizes
                and all(np.array_equal(x, y) for x, y in zip(self.arrays(), other.arrays())))


def init_weights(sizes, rng: np.random.Generator, shared_output_bias: bool = False) -> MlpParameters:
    """Zero-mean normal weights with variance 2/fan_in (1/fan_in on the output layer); zero biases."""
    sizes = tuple(sizes)
    weights, biases = [], []
    for k in range(len(sizes) - 1):
        fan_in, fan_out = sizes[k], sizes[k + 1]
        last = k == len(sizes) - 2
        gain = 1.0 if last else 2.0
        weights.append(rng.standard_normal((fan_out, fan_in)) * np.sqrt(gain / fan_in))
        biases.append(np.zeros(1 if (last and shared_output_bias) else fan_out))
    return MlpParameters(sizes, weights, biases, shared_output_bias)


def _as_batch(params: MlpParameters, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x2 = x[None, :] if single else x
    if x2.ndim != 2 or x2.shape[1] != params.n_inputs:
        raise ShapeError(f"expected input of length {params.n_inputs}, got shape {x.shape}")
    return x2, single


def _forward_layers(params: MlpParameters, x: np.ndarray) -> list:
    acts = [x]
    h = x
    n_layers = len(params.weights)
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w.T + b
        h = z if k == n_layers - 1 else np.maximum(z, 0.0)
        acts.append(h)
    return acts


def forward(params: MlpParameters, state) -> np.ndarray:
    """Action values for one state (shape (m,)) or a batch (shape (B, m))."""
    x, single = _as_batch(params, state)
    out = _forward_layers(params, x)[-1]
    return out[0] if single else out


def backward(params: MlpParameters, state, output_grad) -> MlpParameters:
    """Gradient of ``sum(output_grad * Q(state))`` w.r.t. every parameter.

    Batched inputs sum the gradient over the batch.
    """
    x, single = _as_batch(params, state)
    g = np.asarray(output_grad, dtype=float)
    g = g[None, :] if single else g
    if g.shape != (x.shape[0], params.n_actions):
        raise ShapeError(f"output gradient shape {g.shape} does not match {(x.shape[0], params.n_actions)}")

    acts = _forward_layers(params, x)
    grads = params.zeros_like()
    n_layers = len(params.weights)
    delta = g
    for k in range(n_layers - 1, -1, -1):
        grads.weights[k] = delta.T @ acts[k]
        db = delta.sum(axis=0)
        if k == n_layers - 1 and params.shared_output_bias:
            db = np.array([db.sum()])
        grads.biases[k] = db
        if k > 0:
            delta = (delta @ params.weights[k]) * (acts[k] > 0)
    return grads


@dataclass
class OptimizerState:
    """RMSProp state: running mean of squared gradients per parameter."""

    accumulators: list
    lr: float = 0.00025
    decay: float = 0.95
    damping: float = 1e-8
    steps: int = field(default=0)

    @classmethod
    def for_params(cls, params: MlpParameters, lr: float = 0.00025, decay: float = 0.95,
                   damping: float = 1e-8) -> "OptimizerState":
        return cls([np.zeros_like(a) for a in params.arrays()], lr, decay, damping)


def rmsprop_step(params: MlpParameters, grads: MlpParameters, opt: OptimizerState) -> MlpParameters:
    """One in-place RMSProp step; refuses non-finite gradients."""
    g_arrays = grads.arrays()
    if not all(np.all(np.isfinite(g)) for g in g_arrays):
        raise NumericError("non-finite gradient; step refused")
    for p, g, acc in zip(params.arrays(), g_arrays, opt.accumulators):
        acc *= opt.decay
        acc += (1.0 - opt.decay) * g * g
        p -= opt.lr * g / np.sqrt(acc + opt.damping)
    opt.steps += 1
    return params


def save_checkpoint(path, params: MlpParameters) -> None:
    header = np.array([len(params.sizes), *params.sizes, int(params.shared_output_bias)], dtype="<i8")
    with open(path, "wb") as fh:
        fh.write(header.tobytes())
        fh.write(params.flat().astype("<f8").tobytes())


def load_checkpoint(path) -> MlpParameters:
    raw = Path(path).read_bytes()
    k = int(np.frombuffer(raw, dtype="<i8", count=1)[0])
    header = np.frombuffer(raw, dtype="<i8", count=k + 2)
    sizes, shared = tuple(int(s) for s in header[1:k + 1]), bool(header[k + 1])
    flat = np.frombuffer(raw, dtype="<f8", offset=8 * (k + 2)).astype(float)
    weights, biases, pos = [], [], 0
    for j in range(k - 1):
        out, inp = sizes[j + 1], sizes[j]
        nb = 1 if (j == k - 2 and shared) else out
        weights.append(flat[pos:pos + out * inp].reshape(out, inp))
        pos += out * inp
        biases.append(flat[pos:pos + nb].copy())
        pos += nb
    if pos != flat.size:
        raise ShapeError(f"checkpoint {path} has {flat.size} values, header implies {pos}")
    return MlpParameters(sizes, weights, biases, shared)
