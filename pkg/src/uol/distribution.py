"""Dispersion, distance and Monte-Carlo comparison of diagonal Gaussian embeddings."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .networks import GaussianEmbedding, MlpParams, compare_batch


@dataclass(frozen=True)
class SampleNoise:
    """Standard-normal draws for T comparisons, one set per side of the pair."""

    eps1: np.ndarray  # (T, D)
    eps2: np.ndarray  # (T, D)

    def __post_init__(self):
        if self.eps1.shape != self.eps2.shape or self.eps1.ndim != 2:
            raise ValueError("noise must be two (T, D) arrays of equal shape")

    @property
    def T(self) -> int:
        return self.eps1.shape[0]

    @classmethod
    def draw(cls, rng: np.random.Generator, T: int, D: int) -> "SampleNoise":
        if T < 1:
            raise ValueError("T must be >= 1")
        return cls(rng.standard_normal((T, D)), rng.standard_normal((T, D)))


def frobenius_dispersion(var_diag) -> float:
    """sqrt(sum |sigma_jj|) over the diagonal of the covariance."""
    v = np.asarray(var_diag, dtype=float)
    if np.any(v <= 0):
        raise ValueError("variances must be strictly positive")
    return float(np.sqrt(np.sum(np.abs(v))))


def _as_pair(z1, z2):
    if z1.mu.shape != z2.mu.shape:
        raise ValueError("embedding dimensions differ")
    return z1, z2


def wasserstein_sq(z1: GaussianEmbedding, z2: GaussianEmbedding) -> float:
    """Sum over dimensions of squared mean gaps plus squared gaps of the diagonal entries.

    The diagonal entries are the variances themselves, not standard deviations.
    """
    z1, z2 = _as_pair(z1, z2)
    return float(np.sum((z1.mu - z2.mu) ** 2 + (z1.var_diag - z2.var_diag) ** 2))


def reparam_sample(z: GaussianEmbedding | tuple, eps) -> np.ndarray:
    """mu + sqrt(var) * eps; ``eps`` may carry extra leading axes."""
    if isinstance(z, GaussianEmbedding):
        mu, var = z.mu, z.var_diag
    else:
        mu, var = (np.asarray(a, dtype=float) for a in z)
    eps = np.asarray(eps, dtype=float)
    if eps.shape[-1] != mu.shape[-1]:
        raise ValueError("noise dimension does not match the embedding")
    return mu + np.sqrt(var) * eps


def reparam_sample_grad(var, eps, grad_sample):
    """Pull a gradient on the sample back to (mu, var)."""
    var = np.asarray(var, dtype=float)
    return grad_sample, grad_sample * eps * 0.5 / np.sqrt(var)


def compare_distributions(params: MlpParams | Callable, z1: GaussianEmbedding, z2: GaussianEmbedding,
                          noise: SampleNoise) -> np.ndarray:
    """Mean of T comparator logit vectors over reparameterised samples of each side.

    ``params`` may also be any callable mapping two (T, D) sample arrays to (T, 3) logits.
    """
    _as_pair(z1, z2)
    if noise.T < 1:
        raise ValueError("T must be >= 1")
    s1 = reparam_sample(z1, noise.eps1)
    s2 = reparam_sample(z2, noise.eps2)
    if isinstance(params, MlpParams):
        logits, _ = compare_batch(params, s1, s2)
    else:
        logits = np.asarray(params(s1, s2), dtype=float)
    return logits.mean(axis=0)


def compare_many(params: MlpParams, mu1, var1, mu2, var2, eps1, eps2) -> np.ndarray:
    """Vectorised comparison of P distribution pairs.

    mu/var arrays are (P, D) and noise is (P, T, D). Returns (P, 3) averaged logits.
    """
    s1 = mu1[:, None, :] + np.sqrt(var1)[:, None, :] * eps1
    s2 = mu2[:, None, :] + np.sqrt(var2)[:, None, :] * eps2
    P, T, D = s1.shape
    logits, _ = compare_batch(params, s1.reshape(P * T, D), s2.reshape(P * T, D))
    return logits.reshape(P, T, 3).mean(axis=1)
