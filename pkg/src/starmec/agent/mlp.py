"""Small fully connected network with a hand-written backward pass."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ACTIVATIONS = ("tanh", "relu", "linear")


def _act(x, kind):
    if kind == "tanh":
        return np.tanh(x)
    if kind == "relu":
        return np.maximum(x, 0.0)
    return x


def _act_grad(pre, post, kind):
    if kind == "tanh":
        return 1.0 - post * post
    if kind == "relu":
        return (pre > 0).astype(float)
    return np.ones_like(pre)


@dataclass
class MlpParams:
    """Weights ``W[i]`` of shape (in, out) and biases ``b[i]`` of shape (out,).

    Hidden layers use ``activation``; the output layer is linear.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "tanh"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias per weight matrix")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {i}: weight {w.shape} and bias {b.shape} do not match")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ValueError(f"layer {i}: input size {w.shape[0]} does not chain")

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def arrays(self) -> list[np.ndarray]:
        """Flat parameter list in a fixed order (W0, b0, W1, b1, ...)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                         self.activation)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


def init_mlp(sizes, rng: np.random.Generator, activation: str = "tanh",
             out_scale: float = 1.0) -> MlpParams:
    """Glorot-uniform weights, zero biases; the last layer is scaled by ``out_scale``."""
    weights, biases = [], []
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        limit = np.sqrt(6.0 / (n_in + n_out))
        w = rng.uniform(-limit, limit, size=(n_in, n_out))
        if i == len(sizes) - 2:
            w *= out_scale
        weights.append(w)
        biases.append(np.zeros(n_out))
    return MlpParams(weights, biases, activation)


def mlp_forward(params: MlpParams, x, cache: bool = False):
    """Evaluate the network on a batch ``x`` of shape (B, in) or a single row."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.sizes[0]:
        raise ValueError(f"input has size {x.shape[-1]}, network expects {params.sizes[0]}")
    acts, pres = [x], []
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        pres.append(z)
        h = z if i == last else _act(z, params.activation)
        acts.append(h)
    return (h, (acts, pres)) if cache else h


def mlp_backward(params: MlpParams, x, upstream, cache=None) -> list[np.ndarray]:
    """Gradients of ``sum(upstream * f(x))`` with respect to (W0, b0, W1, b1, ...).

    ``x`` is (B, in) and ``upstream`` is (B, out). Pass the ``cache`` from
    :func:`mlp_forward` to skip recomputing the forward pass.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    g = np.atleast_2d(np.asarray(upstream, dtype=float))
    if cache is None:
        _, cache = mlp_forward(params, x, cache=True)
    acts, pres = cache
    grads: list[np.ndarray] = []
    last = len(params.weights) - 1
    for i in range(last, -1, -1):
        if i != last:
            g = g * _act_grad(pres[i], acts[i + 1], params.activation)
        a_in = np.atleast_2d(acts[i])
        grads.append(g.sum(axis=0))
        grads.append(a_in.T @ g)
        if i:
            g = g @ params.weights[i].T
    grads.reverse()
    return grads
