"""Cross-entropy, ordinal hinge and dispersion losses with their gradients.

The scalar functions mirror the loss definitions one instance at a time; the
``*_grad`` variants work on whole batches and feed the training graph.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .distribution import wasserstein_sq
from .networks import GaussianEmbedding
from .ordering import OrderRelation, Triplet

KL_FLOOR = 1e-8


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 1e-4
    beta: float = 1e-3
    tau: float = 1.0

    def __post_init__(self):
        if not (self.alpha >= 0 and self.beta >= 0 and math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise ValueError("alpha and beta must be finite and >= 0")
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise ValueError("tau must be positive")


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def ce_loss(logits, target: OrderRelation) -> float:
    logits = np.asarray(logits, dtype=float)
    return float(-log_softmax(logits)[target.onehot_index])


def ce_loss_grad(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over rows; ``targets`` are one-hot indices."""
    logp = log_softmax(logits)
    P = logits.shape[0]
    loss = -logp[np.arange(P), targets].mean()
    grad = np.exp(logp)
    grad[np.arange(P), targets] -= 1.0
    return float(loss), grad / P


def hinge_from_distances(d_lm, d_ln, tau: float) -> float:
    d_lm, d_ln = np.asarray(d_lm, dtype=float), np.asarray(d_ln, dtype=float)
    if d_lm.size == 0:
        warnings.warn("empty triplet set; ordinal hinge loss is 0", RuntimeWarning)
        return 0.0
    return float(np.maximum(0.0, d_lm + tau - d_ln).mean())


def hinge_ordinal_loss(triplets: Sequence[tuple[GaussianEmbedding, GaussianEmbedding, GaussianEmbedding]],
                       tau: float) -> float:
    """Mean of max(0, d(z_l, z_m) + tau - d(z_l, z_n)) with d the Gaussian distance."""
    d_lm = [math.sqrt(wasserstein_sq(zl, zm)) for zl, zm, _ in triplets]
    d_ln = [math.sqrt(wasserstein_sq(zl, zn)) for zl, _, zn in triplets]
    return hinge_from_distances(d_lm, d_ln, tau)


def _dist_grad(mu, var, a, b):
    dmu = mu[a] - mu[b]
    dvar = var[a] - var[b]
    d = np.sqrt((dmu ** 2 + dvar ** 2).sum(axis=1))
    safe = np.where(d > 0, d, 1.0)
    # subgradient 0 at coincident embeddings
    scale = np.where(d > 0, 1.0 / safe, 0.0)[:, None]
    return d, dmu * scale, dvar * scale


def hinge_loss_grad(mu: np.ndarray, var: np.ndarray, triplets: Sequence[Triplet],
                    tau: float) -> tuple[float, np.ndarray, np.ndarray]:
    """Batch hinge loss and its gradient w.r.t. (mu, var) rows."""
    gmu, gvar = np.zeros_like(mu), np.zeros_like(var)
    if len(triplets) == 0:
        warnings.warn("empty triplet set; ordinal hinge loss is 0", RuntimeWarning)
        return 0.0, gmu, gvar
    t = np.asarray(triplets, dtype=int)
    l, m, n = t[:, 0], t[:, 1], t[:, 2]
    d_lm, gmu_lm, gvar_lm = _dist_grad(mu, var, l, m)
    d_ln, gmu_ln, gvar_ln = _dist_grad(mu, var, l, n)
    margin = d_lm + tau - d_ln
    active = (margin > 0).astype(float)[:, None] / len(t)
    loss = float(np.maximum(0.0, margin).mean())
    np.add.at(gmu, l, active * (gmu_lm - gmu_ln))
    np.add.at(gmu, m, -active * gmu_lm)
    np.add.at(gmu, n, active * gmu_ln)
    np.add.at(gvar, l, active * (gvar_lm - gvar_ln))
    np.add.at(gvar, m, -active * gvar_lm)
    np.add.at(gvar, n, active * gvar_ln)
    return loss, gmu, gvar


def kl_dispersion_loss(pred, eta, normalized: bool = False) -> float:
    """sum_m eta_m * (log(eta_m + floor) - log(pred_m)).

    With ``normalized=True`` both vectors are first scaled to sum to one, giving
    a proper KL divergence between batch distributions.
    """
    return kl_dispersion_grad(pred, eta, normalized)[0]


def kl_dispersion_grad(pred, eta, normalized: bool = False) -> tuple[float, np.ndarray]:
    pred = np.asarray(pred, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if pred.shape != eta.shape:
        raise ValueError("prediction and ground-truth vectors differ in length")
    if np.any(pred <= 0):
        raise ValueError("predicted dispersions must be positive")
    if np.any(eta < 0):
        raise ValueError("ground-truth dispersions must be >= 0")
    if not normalized:
        loss = float(np.sum(eta * (np.log(eta + KL_FLOOR) - np.log(pred))))
        return loss, -eta / pred
    p = (eta + KL_FLOOR) / np.sum(eta + KL_FLOOR)
    S = pred.sum()
    q = pred / S
    loss = float(np.sum(p * (np.log(p) - np.log(q))))
    # d/dpred_k of -sum p_m log(pred_m / S) = -p_k / pred_k + 1 / S
    return loss, -p / pred + 1.0 / S


def total_loss(ce: float, hinge: float, kl: float, weights: LossWeights) -> float:
    return ce + weights.alpha * hinge + weights.beta * kl
