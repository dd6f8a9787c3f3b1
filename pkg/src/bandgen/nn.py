"""Minimal dense-network machinery: ReLU MLPs with analytic backprop, Adam,
Polyak averaging and flat-parameter (de)serialization.

Everything is float64 and fully deterministic given the init RNG, which keeps
checkpoints byte-stable and makes finite-difference gradient checks exact
enough to assert at 1e-4 relative error.
"""

from __future__ import annotations

import numpy as np


class MLP:
    """Fully connected network with ReLU hidden activations and linear output.

    Parameters are a flat list [W0, b0, W1, b1, ...].  ``forward`` returns the
    output plus a cache for ``backward``, which yields gradients in the same
    layout and optionally the gradient w.r.t. the input.
    """

    def __init__(self, sizes: tuple[int, ...], rng: np.random.Generator, out_scale: float = 1.0):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.sizes = tuple(int(s) for s in sizes)
        self.params: list[np.ndarray] = []
        n_layers = len(sizes) - 1
        for i in range(n_layers):
            fan_in, fan_out = sizes[i], sizes[i + 1]
            std = np.sqrt(2.0 / fan_in)
            if i == n_layers - 1:
                std = out_scale * np.sqrt(1.0 / fan_in)
            w = rng.normal(0.0, std, size=(fan_in, fan_out))
            b = np.zeros(fan_out)
            self.params.append(w)
            self.params.append(b)

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        acts = [x]
        h = x
        for i in range(self.n_layers):
            w, b = self.params[2 * i], self.params[2 * i + 1]
            z = h @ w + b
            if i < self.n_layers - 1:
                z = np.maximum(z, 0.0)
            acts.append(z)
            h = z
        return h, acts

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(
        self, acts: list[np.ndarray], grad_out: np.ndarray, need_input_grad: bool = False
    ) -> tuple[list[np.ndarray], np.ndarray | None]:
        grads: list[np.ndarray] = [None] * len(self.params)
        delta = np.asarray(grad_out, dtype=np.float64)
        for i in range(self.n_layers - 1, -1, -1):
            w = self.params[2 * i]
            h_in = acts[i]
            if i < self.n_layers - 1:
                delta = delta * (acts[i + 1] > 0.0)
            grads[2 * i] = h_in.T @ delta
            grads[2 * i + 1] = delta.sum(axis=0)
            if i > 0 or need_input_grad:
                delta = delta @ w.T
        return grads, (delta if need_input_grad else None)

    def copy_params(self) -> list[np.ndarray]:
        return [p.copy() for p in self.params]

    def set_params(self, params: list[np.ndarray]) -> None:
        if len(params) != len(self.params):
            raise ValueError("parameter count mismatch")
        for mine, new in zip(self.params, params):
            if mine.shape != new.shape:
                raise ValueError("parameter shape mismatch")
            mine[...] = new


class Adam:
    """Adaptive-moment gradient descent over a list of parameter arrays."""

    def __init__(self, params: list[np.ndarray], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1**self.t
        bias2 = 1.0 - b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m[...] = b1 * m + (1.0 - b1) * g
            v[...] = b2 * v + (1.0 - b2) * g * g
            p -= self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)

    def state_arrays(self) -> list[np.ndarray]:
        return self.m + self.v + [np.array([float(self.t)])]

    def load_state_arrays(self, arrays: list[np.ndarray]) -> None:
        n = len(self.m)
        if len(arrays) != 2 * n + 1:
            raise ValueError("optimizer state length mismatch")
        for dst, src in zip(self.m, arrays[:n]):
            dst[...] = src
        for dst, src in zip(self.v, arrays[n : 2 * n]):
            dst[...] = src
        self.t = int(arrays[2 * n][0])


def polyak_update(target: list[np.ndarray], online: list[np.ndarray], tau: float) -> None:
    """target <- (1 - tau) target + tau online, in place."""
    for t, o in zip(target, online):
        t *= 1.0 - tau
        t += tau * o


def clip_global_norm(grads: list[np.ndarray], max_norm: float) -> float:
    """Scale gradients in place so their global L2 norm is at most max_norm."""
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
    if total > max_norm and total > 0.0:
        scale = max_norm / total
        for g in grads:
            g *= scale
    return total


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bce_with_logits(z: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Elementwise binary cross-entropy of sigmoid(z) against soft targets y."""
    return np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))


def flatten_params(params: list[np.ndarray]) -> np.ndarray:
    return np.concatenate([p.reshape(-1) for p in params]) if params else np.zeros(0)


def unflatten_params(flat: np.ndarray, like: list[np.ndarray]) -> list[np.ndarray]:
    out = []
    i = 0
    for p in like:
        n = p.size
        out.append(flat[i : i + n].reshape(p.shape).copy())
        i += n
    if i != flat.size:
        raise ValueError("flat parameter size mismatch")
    return out
