"""Small fully connected network for the operator kernel, plus Adagrad and Adam.

Only what the adjoint training loop needs: a batched forward pass and the
parameter gradient of ``sum_i <cotangent_i, net(input_i)>``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_LAYERS = (2, 64, 32, 31)


@dataclass
class MlpParams:
    """Weights ``W[l]`` of shape ``(fan_in, fan_out)`` and biases ``b[l]``.

    ``version`` is bumped on every in-place update so caches built from the
    parameters can detect staleness.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    version: int = field(default=0, compare=False)

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    @property
    def size(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def to_vector(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts += [w.ravel(), b.ravel()]
        return np.concatenate(parts)

    @classmethod
    def from_vector(cls, vec: np.ndarray, layer_dims) -> "MlpParams":
        vec = np.asarray(vec, dtype=np.float64)
        weights, biases, k = [], [], 0
        for n_in, n_out in zip(layer_dims[:-1], layer_dims[1:]):
            weights.append(vec[k:k + n_in * n_out].reshape(n_in, n_out).copy())
            k += n_in * n_out
            biases.append(vec[k:k + n_out].copy())
            k += n_out
        if k != vec.size:
            raise ValueError(f"vector of size {vec.size} does not match layers {tuple(layer_dims)}")
        return cls(weights, biases)

    def set_vector(self, vec: np.ndarray) -> None:
        new = MlpParams.from_vector(vec, self.layer_dims)
        self.weights, self.biases = new.weights, new.biases
        self.version += 1

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.version)


def mlp_init(seed: int, layer_dims=DEFAULT_LAYERS) -> MlpParams:
    """Uniform(+-sqrt(6/fan_in)) hidden layers; the output layer starts at zero."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    n_layers = len(layer_dims) - 1
    for l, (n_in, n_out) in enumerate(zip(layer_dims[:-1], layer_dims[1:])):
        if l == n_layers - 1:
            weights.append(np.zeros((n_in, n_out)))
            biases.append(np.zeros(n_out))
        else:
            bound = np.sqrt(6.0 / n_in)
            weights.append(rng.uniform(-bound, bound, size=(n_in, n_out)))
            biases.append(rng.uniform(-bound, bound, size=n_out))
    return MlpParams(weights, biases)


def _forward(params: MlpParams, inputs: np.ndarray):
    acts = [inputs]
    pre = []
    h = inputs
    last = len(params.weights) - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        pre.append(z)
        h = z if l == last else np.maximum(z, 0.0)
        acts.append(h)
    return acts, pre


def mlp_forward(params: MlpParams, inputs: np.ndarray) -> np.ndarray:
    """Evaluate the network on inputs of shape ``(2,)`` or ``(batch, 2)``."""
    x = np.asarray(inputs, dtype=np.float64)
    single = x.ndim == 1
    acts, _ = _forward(params, np.atleast_2d(x))
    return acts[-1][0] if single else acts[-1]


def mlp_backward_params(params: MlpParams, inputs: np.ndarray, cotangent: np.ndarray) -> MlpParams:
    """Gradient of ``sum_batch cotangent . net(input)`` w.r.t. every parameter.

    Returned as an ``MlpParams`` block with the same shapes as ``params``.
    """
    x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    g = np.atleast_2d(np.asarray(cotangent, dtype=np.float64))
    acts, pre = _forward(params, x)
    n = len(params.weights)
    gw, gb = [None] * n, [None] * n
    for l in range(n - 1, -1, -1):
        if l != n - 1:
            g = g * (pre[l] > 0.0)
        gw[l] = acts[l].T @ g
        gb[l] = g.sum(axis=0)
        if l:
            g = g @ params.weights[l].T
    return MlpParams(gw, gb)


class Optimizer:
    """Adagrad or Adam acting on flat parameter vectors."""

    def __init__(self, kind: str, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        if kind not in ("adagrad", "adam"):
            raise ValueError(f"unknown optimizer {kind!r}")
        self.kind, self.lr = kind, lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.reset()

    def reset(self):
        self.t = 0
        self.accum = None
        self.m = None
        self.v = None

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != np.shape(theta):
            raise ValueError(f"gradient shape {grad.shape} != parameter shape {np.shape(theta)}")
        self.t += 1
        if self.kind == "adagrad":
            if self.accum is None:
                self.accum = np.zeros_like(grad)
            self.accum += grad**2
            return theta - self.lr * grad / np.sqrt(self.accum + self.eps)
        if self.m is None:
            self.m, self.v = np.zeros_like(grad), np.zeros_like(grad)
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad**2
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return theta - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def optimizer_step(state: Optimizer, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
    return state.step(params, grad)
