"""Score prediction metrics."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata


class UndefinedMetricError(ValueError):
    pass


@dataclass(frozen=True)
class MetricsReport:
    mae: float
    rmse: float
    pc: float
    pairwise_acc: float

    def to_dict(self) -> dict:
        return asdict(self)


def pearson(pred, target) -> float:
    pred, target = np.asarray(pred, dtype=float), np.asarray(target, dtype=float)
    if pred.shape != target.shape or pred.ndim != 1:
        raise ValueError("pred and target must be vectors of equal length")
    if pred.size < 2:
        raise UndefinedMetricError("correlation needs at least 2 instances")
    a, b = pred - pred.mean(), target - target.mean()
    denom = np.sqrt((a * a).sum() * (b * b).sum())
    if denom == 0.0:
        raise UndefinedMetricError("correlation undefined for a constant vector")
    return float(np.clip((a * b).sum() / denom, -1.0, 1.0))


def spearman(pred, target) -> float:
    return pearson(rankdata(pred), rankdata(target))


def pairwise_accuracy(pred, target) -> float:
    """Share of pairs with distinct targets whose predicted order agrees (ties count as wrong)."""
    pred, target = np.asarray(pred, dtype=float), np.asarray(target, dtype=float)
    iu = np.triu_indices(pred.size, k=1)
    t_sign = np.sign(target[:, None] - target[None, :])[iu]
    p_sign = np.sign(pred[:, None] - pred[None, :])[iu]
    keep = t_sign != 0
    if not keep.any():
        raise UndefinedMetricError("no pair with distinct targets")
    return float((p_sign[keep] == t_sign[keep]).mean())


def compute_metrics(pred, target) -> MetricsReport:
    pred, target = np.asarray(pred, dtype=float), np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ValueError("pred and target must have equal length")
    if pred.size < 2:
        raise UndefinedMetricError("metrics need at least 2 instances")
    err = pred - target
    return MetricsReport(
        mae=float(np.abs(err).mean()),
        rmse=float(np.sqrt((err * err).mean())),
        pc=pearson(pred, target),
        pairwise_acc=pairwise_accuracy(pred, target),
    )
