"""Synthetic rated datasets with simulated raters.

Every instance has a hidden true score in [1, 5]. A panel of raters scores it
with Gaussian disagreement (the instance's dispersion), and the ratings are
clipped to the bounded scale. Features are a seeded nonlinear function of the
true score plus noise, so a model can learn order from features alone.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

SCORE_MIN = 1.0
SCORE_MAX = 5.0


@dataclass
class RatedInstance:
    id: int
    features: np.ndarray
    mean_score: float
    rating_variance: float
    true_score: Optional[float] = None
    ratings: Optional[np.ndarray] = None

    def validate(self) -> None:
        feats = np.asarray(self.features, dtype=float)
        if feats.ndim != 1 or not np.all(np.isfinite(feats)):
            raise ValueError(f"instance {self.id}: features must be a finite vector")
        if not SCORE_MIN <= self.mean_score <= SCORE_MAX:
            raise ValueError(f"instance {self.id}: mean_score {self.mean_score} outside [1, 5]")
        if not (self.rating_variance >= 0.0 and math.isfinite(self.rating_variance)):
            raise ValueError(f"instance {self.id}: rating_variance must be >= 0")
        if self.true_score is not None and not SCORE_MIN <= self.true_score <= SCORE_MAX:
            raise ValueError(f"instance {self.id}: true_score {self.true_score} outside [1, 5]")
        if self.ratings is not None:
            r = np.asarray(self.ratings, dtype=float)
            if r.ndim != 1 or r.size == 0:
                raise ValueError(f"instance {self.id}: ratings must be a non-empty vector")
            if np.any(r < SCORE_MIN) or np.any(r > SCORE_MAX):
                raise ValueError(f"instance {self.id}: ratings outside [1, 5]")
            if not math.isclose(r.mean(), self.mean_score, rel_tol=1e-9, abs_tol=1e-12):
                raise ValueError(f"instance {self.id}: mean_score is not the mean of ratings")
            if not math.isclose(r.var(), self.rating_variance, rel_tol=1e-9, abs_tol=1e-12):
                raise ValueError(f"instance {self.id}: rating_variance is not the population variance of ratings")


@dataclass
class SyntheticConfig:
    n: int = 2000
    feature_dim: int = 16
    rater_count: int = 60
    dispersion_range: tuple[float, float] = (0.2, 1.0)
    # "uniform" or ("beta", a, b)
    score_distribution: str | tuple = "uniform"
    feature_noise: float = 0.05
    seed: int = 0

    def validate(self) -> None:
        lo, hi = self.dispersion_range
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be >= 1")
        if self.rater_count < 2:
            raise ValueError("rater_count must be >= 2 for a variance to exist")
        if lo < 0 or hi < lo:
            raise ValueError("dispersion_range must satisfy 0 <= lo <= hi")
        if self.feature_noise < 0:
            raise ValueError("feature_noise must be >= 0")
        _score_sampler(self.score_distribution)


@dataclass(frozen=True)
class LabelShift:
    """Monotone distortion s -> 1 + 4 * ((s - 1) / 4) ** gamma of the [1, 5] scale."""

    gamma: float

    def __post_init__(self):
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ValueError(f"gamma must be positive, got {self.gamma}")

    def __call__(self, score: float) -> float:
        u = (score - SCORE_MIN) / (SCORE_MAX - SCORE_MIN)
        return SCORE_MIN + (SCORE_MAX - SCORE_MIN) * u ** self.gamma


def simulate_raters(true_score: float, dispersion: float, K: int,
                    rng: np.random.Generator) -> tuple[np.ndarray, float, float]:
    """Draw ``K`` clipped Normal(true_score, dispersion**2) ratings.

    Returns the ratings, their mean and their population variance.
    """
    if K < 2:
        raise ValueError(f"need at least 2 raters, got {K}")
    if not SCORE_MIN <= true_score <= SCORE_MAX:
        raise ValueError(f"true_score {true_score} outside [1, 5]")
    if dispersion < 0:
        raise ValueError("dispersion must be >= 0")
    ratings = np.clip(true_score + dispersion * rng.standard_normal(K), SCORE_MIN, SCORE_MAX)
    return ratings, float(ratings.mean()), float(ratings.var())


def _score_sampler(dist):
    if dist == "uniform":
        return lambda rng, n: rng.uniform(SCORE_MIN, SCORE_MAX, n)
    if isinstance(dist, (tuple, list)) and len(dist) == 3 and dist[0] == "beta":
        a, b = float(dist[1]), float(dist[2])
        if a <= 0 or b <= 0:
            raise ValueError("beta parameters must be positive")
        return lambda rng, n: SCORE_MIN + (SCORE_MAX - SCORE_MIN) * rng.beta(a, b, n)
    raise ValueError(f"unknown score distribution {dist!r}")


def parse_score_distribution(text: str):
    """Parse ``uniform`` or ``beta:a,b`` into a config value."""
    if text == "uniform":
        return "uniform"
    if text.startswith("beta:"):
        a, b = text[len("beta:"):].split(",")
        return ("beta", float(a), float(b))
    raise ValueError(f"unknown score distribution {text!r}")


def feature_basis(true_scores: np.ndarray, dim: int) -> np.ndarray:
    u = (np.asarray(true_scores, dtype=float) - 3.0) / 2.0
    base = np.stack([u, u * u, np.sin(np.pi * u), np.cos(np.pi * u)], axis=-1)
    reps = -(-dim // base.shape[-1])
    return np.tile(base, reps)[..., :dim]


def generate_dataset(cfg: SyntheticConfig) -> list[RatedInstance]:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    F = cfg.feature_dim
    mixing = rng.standard_normal((F, F)) / math.sqrt(F)
    true_scores = _score_sampler(cfg.score_distribution)(rng, cfg.n)
    lo, hi = cfg.dispersion_range
    dispersions = rng.uniform(lo, hi, cfg.n)
    features = feature_basis(true_scores, F) @ mixing.T
    features = features + cfg.feature_noise * rng.standard_normal(features.shape)

    out = []
    for i in range(cfg.n):
        ratings, mean, var = simulate_raters(float(true_scores[i]), float(dispersions[i]),
                                             cfg.rater_count, rng)
        out.append(RatedInstance(id=i, features=features[i].copy(), mean_score=mean,
                                 rating_variance=var, true_score=float(true_scores[i]),
                                 ratings=ratings))
    return out


def apply_label_shift(instances: Sequence[RatedInstance], shift: LabelShift | float) -> list[RatedInstance]:
    """Remap scores through a monotone label shift; features stay untouched.

    Individual ratings are dropped from the shifted copies because the mean of
    shifted ratings is not the shifted mean.
    """
    if not isinstance(shift, LabelShift):
        shift = LabelShift(float(shift))
    out = []
    for inst in instances:
        out.append(replace(
            inst,
            mean_score=shift(inst.mean_score),
            true_score=None if inst.true_score is None else shift(inst.true_score),
            ratings=None,
        ))
    return out


def bin_index(score: float, width: float = 0.1) -> int:
    """Half-open bin of ``score`` on [1, 5]; a score of exactly 5 joins the last bin."""
    if not SCORE_MIN <= score <= SCORE_MAX:
        raise ValueError(f"score {score} outside [1, 5]")
    n_bins = num_bins(width)
    # guard against (1.7 - 1) / 0.1 == 6.999999999999999
    idx = math.floor((score - SCORE_MIN) / width + 1e-9)
    return min(idx, n_bins - 1)


def num_bins(width: float = 0.1) -> int:
    if width <= 0:
        raise ValueError("bin width must be positive")
    return max(1, math.ceil((SCORE_MAX - SCORE_MIN) / width - 1e-9))


def scores_of(instances: Sequence[RatedInstance], target: str = "mean") -> np.ndarray:
    if target == "mean":
        return np.array([inst.mean_score for inst in instances], dtype=float)
    if target == "true":
        if any(inst.true_score is None for inst in instances):
            raise ValueError("true_score missing on some instances")
        return np.array([inst.true_score for inst in instances], dtype=float)
    raise ValueError(f"unknown score target {target!r}")


def feature_matrix(instances: Sequence[RatedInstance]) -> np.ndarray:
    return np.stack([np.asarray(inst.features, dtype=float) for inst in instances])


def split_dataset(instances: Sequence[RatedInstance], test_fraction: float,
                  seed: int) -> tuple[list[RatedInstance], list[RatedInstance]]:
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must be in (0, 1)")
    perm = np.random.default_rng(seed).permutation(len(instances))
    n_test = max(1, int(round(test_fraction * len(instances))))
    test_idx = set(perm[:n_test].tolist())
    train = [inst for i, inst in enumerate(instances) if i not in test_idx]
    test = [inst for i, inst in enumerate(instances) if i in test_idx]
    return train, test
