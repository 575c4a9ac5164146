"""Small numpy MLPs: the Gaussian encoder and the three-layer order comparator.

All forward passes are batched over the leading axis and return a cache that
``backward`` consumes. Parameters are treated as immutable; optimizers build
new ``MlpParams`` objects, which also lets ``backward`` detect stale caches.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

ACTIVATIONS = ("relu", "identity")


class StaleCacheError(RuntimeError):
    """A forward cache was handed to backward for different parameters."""


@dataclass(frozen=True)
class Layer:
    weight: np.ndarray  # (fan_in, fan_out)
    bias: np.ndarray  # (fan_out,)
    activation: str = "identity"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise ValueError("layer weight/bias shapes do not chain")

    @property
    def fan_in(self) -> int:
        return self.weight.shape[0]

    @property
    def fan_out(self) -> int:
        return self.weight.shape[1]


@dataclass(frozen=True)
class MlpParams:
    layers: tuple[Layer, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ValueError("an MLP needs at least one layer")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.fan_out != b.fan_in:
                raise ValueError(f"layer dims do not chain: {a.fan_out} -> {b.fan_in}")

    @property
    def in_dim(self) -> int:
        return self.layers[0].fan_in

    @property
    def out_dim(self) -> int:
        return self.layers[-1].fan_out

    def tensors(self) -> list[np.ndarray]:
        """Flat list [W0, b0, W1, b1, ...]; the order gradients use too."""
        out = []
        for layer in self.layers:
            out.extend((layer.weight, layer.bias))
        return out

    def with_tensors(self, tensors: Sequence[np.ndarray]) -> "MlpParams":
        if len(tensors) != 2 * len(self.layers):
            raise ValueError("tensor count does not match layer count")
        layers = []
        for k, layer in enumerate(self.layers):
            w, b = tensors[2 * k], tensors[2 * k + 1]
            if w.shape != layer.weight.shape or b.shape != layer.bias.shape:
                raise ValueError("tensor shape mismatch")
            layers.append(Layer(np.asarray(w, dtype=float), np.asarray(b, dtype=float),
                                layer.activation))
        return MlpParams(tuple(layers))

    def num_parameters(self) -> int:
        return sum(t.size for t in self.tensors())

    def sub(self, start: int, stop: int | None = None) -> "MlpParams":
        return MlpParams(self.layers[start:stop])


@dataclass
class ForwardCache:
    params: MlpParams
    inputs: list  # input to each layer
    pre: list  # pre-activation of each layer


def init_params(sizes: Sequence[int], seed: int, hidden_activation: str = "relu",
                output_activation: str = "identity") -> MlpParams:
    """Uniform fan-in initialisation, zero biases.

    ``sizes`` lists layer widths including input and output, e.g. [16, 64, 64, 32].
    """
    sizes = list(sizes)
    if len(sizes) < 2:
        raise ValueError("layer spec needs an input and an output size")
    if any(s < 1 for s in sizes):
        raise ValueError("layer sizes must be positive")
    rng = np.random.default_rng(seed)
    layers = []
    for k, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:])):
        act = output_activation if k == len(sizes) - 2 else hidden_activation
        gain = 6.0 if act == "relu" else 3.0
        limit = math.sqrt(gain / fan_in)
        w = rng.uniform(-limit, limit, (fan_in, fan_out))
        layers.append(Layer(w, np.zeros(fan_out), act))
    return MlpParams(tuple(layers))


def forward(params: MlpParams, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.shape[-1] != params.in_dim:
        raise ValueError(f"expected input width {params.in_dim}, got {x.shape[-1]}")
    cache = ForwardCache(params, [], [])
    h = x
    for layer in params.layers:
        cache.inputs.append(h)
        z = h @ layer.weight + layer.bias
        cache.pre.append(z)
        h = np.maximum(z, 0.0) if layer.activation == "relu" else z
    return (h[0] if squeeze else h), cache


def backward(params: MlpParams, cache: ForwardCache,
             grad_out: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    """Reverse-mode pass. Returns (parameter gradients in ``tensors()`` order, input gradient)."""
    if cache.params is not params:
        raise StaleCacheError("forward cache was computed with different parameters")
    g = np.asarray(grad_out, dtype=float)
    squeeze = g.ndim == 1
    if squeeze:
        g = g[None, :]
    grads: list[np.ndarray] = [None] * (2 * len(params.layers))  # type: ignore[list-item]
    for k in range(len(params.layers) - 1, -1, -1):
        layer = params.layers[k]
        if layer.activation == "relu":
            g = g * (cache.pre[k] > 0.0)
        grads[2 * k] = cache.inputs[k].T @ g
        grads[2 * k + 1] = g.sum(axis=0)
        g = g @ layer.weight.T
    return grads, (g[0] if squeeze else g)


@dataclass(frozen=True)
class GaussianEmbedding:
    mu: np.ndarray
    var_diag: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        var = np.asarray(self.var_diag, dtype=float)
        if mu.shape != var.shape or mu.ndim != 1:
            raise ValueError("mu and var_diag must be vectors of equal length")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(var))):
            raise ValueError("embedding entries must be finite")
        if np.any(var <= 0):
            raise ValueError("var_diag must be strictly positive")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "var_diag", var)

    @property
    def dim(self) -> int:
        return self.mu.shape[0]


def encoder_sizes(feature_dim: int, embed_dim: int, hidden: Sequence[int] = (64, 64)) -> list[int]:
    return [feature_dim, *hidden, 2 * embed_dim]


def comparator_sizes(embed_dim: int, hidden: Sequence[int] = (64, 64)) -> list[int]:
    return [2 * embed_dim, *hidden, 3]


def encode_batch(params: MlpParams, features: np.ndarray):
    """Batched encoder. Returns (mu, var, cache); var = exp(log-variance head)."""
    out, cache = forward(params, np.atleast_2d(features))
    D = params.out_dim // 2
    mu, logvar = out[:, :D], out[:, D:]
    return mu, np.exp(logvar), cache


def encode(params: MlpParams, features: np.ndarray) -> GaussianEmbedding:
    features = np.asarray(features, dtype=float)
    if features.ndim != 1 or features.shape[0] != params.in_dim:
        raise ValueError(f"expected a feature vector of length {params.in_dim}")
    mu, var, _ = encode_batch(params, features)
    return GaussianEmbedding(mu[0], var[0])


def compare_batch(params: MlpParams, z1: np.ndarray, z2: np.ndarray):
    """Comparator logits for rows of z1 vs z2, ordered (approx, less, greater)."""
    z1, z2 = np.atleast_2d(z1), np.atleast_2d(z2)
    if z1.shape != z2.shape or 2 * z1.shape[-1] != params.in_dim:
        raise ValueError("point dimensions do not match the comparator")
    return forward(params, np.concatenate([z1, z2], axis=-1))


def compare_points(params: MlpParams, z1: np.ndarray, z2: np.ndarray) -> np.ndarray:
    z1, z2 = np.asarray(z1, dtype=float), np.asarray(z2, dtype=float)
    if z1.ndim != 1 or z2.ndim != 1:
        raise ValueError("compare_points takes single vectors")
    logits, _ = compare_batch(params, z1, z2)
    return logits[0]
