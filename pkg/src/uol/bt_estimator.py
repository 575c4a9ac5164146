"""Absolute score recovery from order verdicts against a scored reference set.

A test instance with unknown score s is compared against references with known
scores. Each verdict follows a cumulative-logit (Bradley-Terry style) model

    P(Y <= j) = logistic(delta_j - k * (s - s_ref)),  delta = (-d, +d, +inf)

with ordinals less=0, approx=1, greater=2, so a higher s makes "greater" more
likely. The estimate maximises the log-likelihood over s in [lo, hi].
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import expit, log_expit

from .distribution import compare_many
from .networks import GaussianEmbedding, MlpParams
from .ordering import OrderRelation
from .synth_data import bin_index, num_bins

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class BTConfig:
    delta: float = 0.8
    k: float = 4.0
    lo: float = 1.0
    hi: float = 5.0
    tol: float = 1e-6

    def __post_init__(self):
        for name in ("delta", "k", "tol"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be finite and positive")
        if not self.lo < self.hi:
            raise ValueError("search range must satisfy lo < hi")


class ComparisonRecord(NamedTuple):
    reference_score: float
    relation: OrderRelation


@dataclass
class ReferenceSet:
    mu: np.ndarray  # (R, D)
    var: np.ndarray  # (R, D)
    scores: np.ndarray  # (R,)
    ids: np.ndarray  # (R,) instance ids
    width: float = 0.1
    bin_counts: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.bin_counts is None:
            counts = np.zeros(num_bins(self.width), dtype=int)
            for s in self.scores:
                counts[bin_index(float(s), self.width)] += 1
            self.bin_counts = counts

    def __len__(self) -> int:
        return int(self.scores.shape[0])

    def embedding(self, r: int) -> GaussianEmbedding:
        return GaussianEmbedding(self.mu[r], self.var[r])


def select_reference_indices(scores: Sequence[float], rng: np.random.Generator,
                             cap: int = 10, width: float = 0.1) -> np.ndarray:
    """Pick min(n_i, cap) indices uniformly at random from each score bin."""
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        raise ValueError("cannot build a reference set from no instances")
    if cap < 1:
        raise ValueError("cap must be >= 1")
    bins = np.array([bin_index(float(s), width) for s in scores])
    chosen = []
    for b in range(num_bins(width)):
        members = np.flatnonzero(bins == b)
        if members.size == 0:
            continue
        take = min(members.size, cap)
        chosen.append(np.sort(rng.choice(members, size=take, replace=False)))
    return np.concatenate(chosen)


def build_reference_set(instances, mu: np.ndarray, var: np.ndarray, rng: np.random.Generator,
                        cap: int = 10, width: float = 0.1) -> ReferenceSet:
    """Reference set from training instances and their encoder outputs (aligned rows)."""
    if len(instances) == 0:
        raise ValueError("cannot build a reference set from no instances")
    scores = np.array([inst.mean_score for inst in instances], dtype=float)
    idx = select_reference_indices(scores, rng, cap, width)
    ids = np.array([instances[i].id for i in idx], dtype=int)
    return ReferenceSet(mu[idx].copy(), var[idx].copy(), scores[idx].copy(), ids, width)


def _log_probs(s_t, s_ref, cfg: BTConfig) -> np.ndarray:
    """Log-probabilities (less, approx, greater), shape broadcast(s_t, s_ref) + (3,)."""
    x = cfg.k * (np.asarray(s_t, dtype=float) - np.asarray(s_ref, dtype=float))
    a0 = -cfg.delta - x
    a1 = cfg.delta - x
    log_less = log_expit(a0)
    log_greater = log_expit(-a1)
    # C(1) - C(0) = sigma(a1) * sigma(-a0) * (1 - exp(a0 - a1))
    log_approx = log_expit(a1) + log_expit(-a0) + math.log(-math.expm1(-2.0 * cfg.delta))
    return np.stack(np.broadcast_arrays(log_less, log_approx, log_greater), axis=-1)


def bt_prob(relation: OrderRelation, s_ref: float, s_t: float, cfg: BTConfig = BTConfig()) -> float:
    x = cfg.k * (s_t - s_ref)
    c0 = expit(-cfg.delta - x)
    c1 = expit(cfg.delta - x)
    if relation is OrderRelation.LESS:
        return float(c0)
    if relation is OrderRelation.APPROX:
        return float(c1 - c0)
    return float(1.0 - c1)


def bt_probs(s_ref, s_t, cfg: BTConfig = BTConfig()) -> np.ndarray:
    """Probabilities of (less, approx, greater) for arrays of scores."""
    return np.exp(_log_probs(s_t, s_ref, cfg))


def _records_arrays(records):
    if len(records) == 0:
        return np.zeros(0), np.zeros(0, dtype=int)
    refs = np.array([r.reference_score for r in records], dtype=float)
    ords = np.array([r.relation.bt_ordinal for r in records], dtype=int)
    return refs, ords


def log_likelihood_arrays(ref_scores: np.ndarray, ordinals: np.ndarray, s_t, cfg: BTConfig) -> np.ndarray:
    """Log-likelihood for a scalar or vector of candidate scores."""
    s = np.atleast_1d(np.asarray(s_t, dtype=float))
    if ref_scores.size == 0:
        out = np.zeros(s.shape)
    else:
        lp = _log_probs(s[:, None], ref_scores[None, :], cfg)
        out = np.take_along_axis(lp, ordinals[None, :, None], axis=-1)[..., 0].sum(axis=1)
    return out if np.ndim(s_t) else out[0]


def bt_log_likelihood(records: Sequence[ComparisonRecord], s_t: float, cfg: BTConfig = BTConfig()) -> float:
    refs, ords = _records_arrays(records)
    return float(log_likelihood_arrays(refs, ords, s_t, cfg))


def golden_section_max(f, lo: float, hi: float, tol: float) -> float:
    """Maximiser of a unimodal ``f`` on [lo, hi]; endpoints are checked explicitly."""
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    best_x, best_f = (c, fc) if fc >= fd else (d, fd)
    for x in (lo, hi):
        fx = f(x)
        if fx >= best_f:
            best_x, best_f = x, fx
    return float(best_x)


def grid_search_max(f_vec, lo: float, hi: float, step: float = 1e-3) -> float:
    """Brute-force maximiser on a regular grid; ``f_vec`` takes an array."""
    n = int(round((hi - lo) / step))
    grid = lo + step * np.arange(n + 1)
    return float(grid[int(np.argmax(f_vec(grid)))])


def estimate_from_arrays(ref_scores: np.ndarray, ordinals: np.ndarray, cfg: BTConfig = BTConfig()) -> float:
    return golden_section_max(lambda s: float(log_likelihood_arrays(ref_scores, ordinals, s, cfg)),
                              cfg.lo, cfg.hi, cfg.tol)


def estimate_from_records(records: Sequence[ComparisonRecord], cfg: BTConfig = BTConfig()) -> float:
    refs, ords = _records_arrays(records)
    return estimate_from_arrays(refs, ords, cfg)


def grid_estimate_from_records(records: Sequence[ComparisonRecord], cfg: BTConfig = BTConfig(),
                               step: float = 1e-3) -> float:
    refs, ords = _records_arrays(records)
    return grid_search_max(lambda g: log_likelihood_arrays(refs, ords, g, cfg), cfg.lo, cfg.hi, step)


def logits_to_ordinals(logits: np.ndarray) -> np.ndarray:
    """Argmax over (approx, less, greater) logits, ties to approx then less, as BT ordinals."""
    onehot = np.argmax(logits, axis=-1)  # first maximum wins
    to_ordinal = np.array([OrderRelation.from_onehot_index(i).bt_ordinal for i in range(3)])
    return to_ordinal[onehot]


def compare_to_references(comparator: MlpParams, mu: np.ndarray, var: np.ndarray,
                          refset: ReferenceSet, eps1: np.ndarray | None, eps2: np.ndarray | None) -> np.ndarray:
    """Averaged logits of the test distribution against every reference, (R, 3).

    With ``eps1 is None`` the comparison uses the means only.
    """
    R = len(refset)
    mu1 = np.broadcast_to(mu, (R, mu.shape[-1]))
    var1 = np.broadcast_to(var, (R, var.shape[-1]))
    if eps1 is None:
        zeros = np.zeros((R, 1, mu.shape[-1]))
        return compare_many(comparator, mu1, var1, refset.mu, refset.var, zeros, zeros)
    return compare_many(comparator, mu1, var1, refset.mu, refset.var, eps1, eps2)


def estimate_score(comparator: MlpParams, test: GaussianEmbedding, refset: ReferenceSet,
                   cfg: BTConfig = BTConfig(), noise=None) -> float:
    """Compare ``test`` with every reference and return the maximum-likelihood score.

    ``noise`` is a pair of (R, T, D) arrays; ``None`` compares means only.
    """
    if len(refset) == 0:
        raise ValueError("reference set is empty")
    eps1, eps2 = (None, None) if noise is None else noise
    logits = compare_to_references(comparator, test.mu, test.var_diag, refset, eps1, eps2)
    return estimate_from_arrays(refset.scores, logits_to_ordinals(logits), cfg)
