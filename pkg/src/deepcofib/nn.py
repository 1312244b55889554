"""Minimal dense-network engine.

Batches are column-major in the modelling sense: an input is a
``(in_dim, batch)`` array, one sample per column.  Everything is float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

IDENTITY = "identity"
RELU = "relu"
ACTIVATIONS = (IDENTITY, RELU)


class ShapeError(ValueError):
    """Input arrays have the wrong shape for the operation."""


class CacheError(ValueError):
    """A forward cache does not belong to the network, or is stale."""


class OptimizationError(RuntimeError):
    """Non-finite values reached the optimizer."""

    def __init__(self, message: str, index: tuple[int, int] | None = None):
        super().__init__(message)
        self.index = index


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray  # (out_dim,)
    activation: str = RELU

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ShapeError("weights must be 2-D")
        if self.bias.shape != (self.weights.shape[0],):
            raise ShapeError(
                f"bias length {self.bias.shape} does not match out_dim {self.weights.shape[0]}"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def n_params(self) -> int:
        return self.weights.size + self.bias.size


@dataclass
class ForwardCache:
    """Per-layer inputs and pre-activations recorded by :func:`forward`."""

    owner: int
    version: int
    inputs: list[np.ndarray] = field(default_factory=list)
    preacts: list[np.ndarray] = field(default_factory=list)


class DenseNetwork:
    """Ordered stack of affine layers with element-wise activations."""

    def __init__(self, layers: Sequence[DenseLayer] = ()):
        self.layers = list(layers)
        for k in range(len(self.layers) - 1):
            if self.layers[k].out_dim != self.layers[k + 1].in_dim:
                raise ShapeError(
                    f"layer {k} out_dim {self.layers[k].out_dim} != "
                    f"layer {k + 1} in_dim {self.layers[k + 1].in_dim}"
                )
        self._version = 0

    @classmethod
    def build(
        cls,
        sizes: Sequence[int],
        activations: Sequence[str],
        rng: np.random.Generator | None = None,
    ) -> "DenseNetwork":
        """Glorot-uniform weights, zero biases.

        ``sizes`` lists every layer width including the input, so a network
        with ``len(sizes) - 1`` layers is returned.
        """
        if len(activations) != len(sizes) - 1:
            raise ValueError("need one activation per layer")
        rng = np.random.default_rng() if rng is None else rng
        layers = []
        for fan_in, fan_out, act in zip(sizes[:-1], sizes[1:], activations):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, size=(fan_out, fan_in))
            layers.append(DenseLayer(w, np.zeros(fan_out), act))
        return cls(layers)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def version(self) -> int:
        return self._version

    def touch(self) -> None:
        """Mark the weights as modified; outstanding caches become stale."""
        self._version += 1

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend((layer.weights, layer.bias))
        return out

    def copy(self) -> "DenseNetwork":
        return DenseNetwork(
            [DenseLayer(l.weights.copy(), l.bias.copy(), l.activation) for l in self.layers]
        )

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return forward(self, x)[0]

    def __repr__(self) -> str:
        dims = [self.in_dim] + [l.out_dim for l in self.layers] if self.layers else []
        return f"DenseNetwork({'-'.join(map(str, dims))}, params={param_count(self)})"


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == RELU:
        return np.maximum(z, 0.0)
    return z


def forward(net: DenseNetwork, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    if x.ndim != 2:
        raise ShapeError("input must be (in_dim, batch)")
    cache = ForwardCache(owner=id(net), version=net.version)
    if not net.layers:
        return (x[:, 0] if squeeze else x), cache
    if x.shape[0] != net.in_dim:
        raise ShapeError(f"input has {x.shape[0]} rows, network expects {net.in_dim}")
    h = x
    for layer in net.layers:
        cache.inputs.append(h)
        z = layer.weights @ h + layer.bias[:, None]
        cache.preacts.append(z)
        h = _activate(z, layer.activation)
    return (h[:, 0] if squeeze else h), cache


def backward(
    net: DenseNetwork, cache: ForwardCache, grad_out: np.ndarray
) -> tuple[list[np.ndarray], np.ndarray]:
    """Backpropagate ``grad_out`` (dLoss/dOutput).

    Returns ``(param_grads, grad_in)`` where ``param_grads`` is aligned with
    :meth:`DenseNetwork.parameters` and ``grad_in`` is dLoss/dInput.
    """
    if cache.owner != id(net) or len(cache.inputs) != len(net.layers):
        raise CacheError("cache was produced by a different network")
    if cache.version != net.version:
        raise CacheError("cache is stale: network weights changed since forward")
    g = np.asarray(grad_out, dtype=np.float64)
    if g.ndim == 1:
        g = g[:, None]
    if net.layers and g.shape != cache.preacts[-1].shape:
        raise ShapeError(f"grad_out shape {g.shape} != output shape {cache.preacts[-1].shape}")
    grads: list[np.ndarray] = [None] * (2 * len(net.layers))  # type: ignore[list-item]
    for k in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[k]
        if layer.activation == RELU:
            g = g * (cache.preacts[k] > 0)
        grads[2 * k] = g @ cache.inputs[k].T
        grads[2 * k + 1] = g.sum(axis=1)
        g = layer.weights.T @ g
    if np.ndim(grad_out) == 1:
        g = g[:, 0]
    return grads, g


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"pred shape {pred.shape} != target shape {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff * diff))
    return loss, (2.0 / diff.size) * diff


def param_count(net: DenseNetwork) -> int:
    return sum(layer.n_params for layer in net.layers)


@dataclass
class AdamState:
    first_moments: list[np.ndarray]
    second_moments: list[np.ndarray]
    step: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], **hyper) -> "AdamState":
        state = cls(
            [np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **hyper
        )
        if not (0 < state.beta1 < 1 and 0 < state.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        return state


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState) -> None:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if not (len(params) == len(grads) == len(state.first_moments)):
        raise ShapeError("params, grads and optimizer state are not congruent")
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape or p.shape != state.first_moments[i].shape:
            raise ShapeError(f"parameter {i}: shape mismatch {p.shape} vs {g.shape}")
        bad = ~np.isfinite(g)
        if bad.any():
            flat = int(np.flatnonzero(bad.ravel())[0])
            raise OptimizationError(
                f"non-finite gradient in parameter {i} at flat index {flat}", (i, flat)
            )
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.first_moments, state.second_moments):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
