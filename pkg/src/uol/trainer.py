"""Training loop and evaluation for the three model modes.

``uol``          Gaussian embeddings, Monte-Carlo comparison, CE + hinge + KL.
``order_point``  point embeddings (the means), CE on direct comparisons only.
``regression``   encoder trunk plus a scalar head trained with squared error.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, replace
from typing import Optional, Sequence

import numpy as np

from . import networks as nn
from .bt_estimator import (BTConfig, ReferenceSet, build_reference_set, compare_to_references,
                           estimate_from_arrays, logits_to_ordinals)
from .losses import LossWeights, ce_loss_grad, hinge_loss_grad, kl_dispersion_grad
from .metrics import MetricsReport, compute_metrics
from .ordering import Triplet, select_balanced_pairs, select_hard_triplets
from .synth_data import RatedInstance, feature_matrix, scores_of

log = logging.getLogger(__name__)

MODES = ("regression", "order_point", "uol")


@dataclass
class TrainConfig:
    theta: float = 0.2
    tau: float = 1.0
    alpha: float = 1e-4
    beta: float = 1e-3
    T: int = 5
    T_eval: int = 10
    batch_size: int = 32
    epochs: int = 50
    lr_max: float = 1e-4
    lr_min: float = 1e-6
    pair_cap: int = 4
    seed: int = 0
    mode: str = "uol"
    embed_dim: int = 16
    encoder_hidden: tuple = (64, 64)
    comparator_hidden: tuple = (64, 64)
    kl_normalized: bool = False
    bt_delta: float = 0.8
    bt_k: float = 4.0
    ref_cap: int = 10
    ref_width: float = 0.1

    def __post_init__(self):
        self.encoder_hidden = tuple(int(h) for h in self.encoder_hidden)
        self.comparator_hidden = tuple(int(h) for h in self.comparator_hidden)

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        positive = ("theta", "tau", "T", "T_eval", "batch_size", "epochs", "lr_max",
                    "lr_min", "pair_cap", "embed_dim", "bt_delta", "bt_k", "ref_cap", "ref_width")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be >= 0")
        if self.lr_min > self.lr_max:
            raise ValueError("lr_min must not exceed lr_max")
        if self.batch_size < 3:
            raise ValueError("batch_size must be >= 3 for triplet selection")

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.alpha, self.beta, self.tau)

    @property
    def bt(self) -> BTConfig:
        return BTConfig(delta=self.bt_delta, k=self.bt_k)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["encoder_hidden"] = list(self.encoder_hidden)
        d["comparator_hidden"] = list(self.comparator_hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)


@dataclass
class ModelCheckpoint:
    config: TrainConfig
    feature_dim: int
    encoder: nn.MlpParams
    comparator: nn.MlpParams
    regression_head: Optional[nn.MlpParams] = None
    seed: int = 0


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros_like(cls, tensors: Sequence[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in tensors], [np.zeros_like(p) for p in tensors], 0)


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState, lr: float,
              b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8) -> tuple[list, AdamState]:
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state differ in length")
    t = state.t + 1
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        new_p.append(p - lr * m_hat / (np.sqrt(v_hat) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_p, AdamState(new_m, new_v, t)


def cosine_lr(epoch: int, epochs: int, lr_max: float = 1e-4, lr_min: float = 1e-6) -> float:
    if not 0 <= epoch < epochs:
        raise ValueError(f"epoch {epoch} outside [0, {epochs})")
    if epochs == 1:
        return lr_max
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * epoch / (epochs - 1)))


@dataclass
class BatchResult:
    ce: float
    hinge: float
    kl: float
    total: float
    encoder_grads: list
    comparator_grads: list


def uol_batch_objective(encoder: nn.MlpParams, comparator: nn.MlpParams, x: np.ndarray,
                        eta: np.ndarray, pairs, triplets: Sequence[Triplet],
                        eps: Optional[tuple[np.ndarray, np.ndarray]], weights: LossWeights,
                        use_hinge: bool = True, use_kl: bool = True,
                        kl_normalized: bool = False) -> BatchResult:
    """Loss and exact gradients for one batch with frozen sampling noise.

    ``eps`` holds (P, T, D) noise for each side of the P pairs; ``None`` compares
    the means directly (point mode).
    """
    mu, var, enc_cache = nn.encode_batch(encoder, x)
    D = mu.shape[1]
    pi = np.array([p.i for p in pairs], dtype=int)
    pj = np.array([p.j for p in pairs], dtype=int)
    targets = np.array([p.relation.onehot_index for p in pairs], dtype=int)

    if eps is None:
        e1 = e2 = np.zeros((len(pairs), 1, D))
    else:
        e1, e2 = eps
    P, T = e1.shape[0], e1.shape[1]
    sd = np.sqrt(var)
    s1 = mu[pi][:, None, :] + sd[pi][:, None, :] * e1
    s2 = mu[pj][:, None, :] + sd[pj][:, None, :] * e2
    logits, cmp_cache = nn.compare_batch(comparator, s1.reshape(P * T, D), s2.reshape(P * T, D))
    mean_logits = logits.reshape(P, T, 3).mean(axis=1)
    ce, g_mean = ce_loss_grad(mean_logits, targets)
    g_logits = np.repeat(g_mean[:, None, :] / T, T, axis=1).reshape(P * T, 3)
    cmp_grads, g_in = nn.backward(comparator, cmp_cache, g_logits)
    g_s1 = g_in[:, :D].reshape(P, T, D)
    g_s2 = g_in[:, D:].reshape(P, T, D)

    g_mu = np.zeros_like(mu)
    g_var = np.zeros_like(var)
    np.add.at(g_mu, pi, g_s1.sum(axis=1))
    np.add.at(g_mu, pj, g_s2.sum(axis=1))
    if eps is not None:
        np.add.at(g_var, pi, (g_s1 * e1).sum(axis=1) * 0.5 / sd[pi])
        np.add.at(g_var, pj, (g_s2 * e2).sum(axis=1) * 0.5 / sd[pj])

    hinge = kl = 0.0
    if use_hinge and len(triplets):
        hinge, h_mu, h_var = hinge_loss_grad(mu, var, triplets, weights.tau)
        g_mu += weights.alpha * h_mu
        g_var += weights.alpha * h_var
    if use_kl:
        pred = np.sqrt(var.sum(axis=1))
        kl, g_pred = kl_dispersion_grad(pred, eta, kl_normalized)
        g_var += weights.beta * (g_pred * 0.5 / pred)[:, None]

    total = ce + weights.alpha * hinge + weights.beta * kl
    g_out = np.concatenate([g_mu, g_var * var], axis=1)  # var = exp(logvar)
    enc_grads, _ = nn.backward(encoder, enc_cache, g_out)
    return BatchResult(ce, hinge, kl, total, enc_grads, cmp_grads)


def regression_batch_objective(trunk: nn.MlpParams, head: nn.MlpParams, x: np.ndarray,
                               y: np.ndarray) -> tuple[float, list, list]:
    h, trunk_cache = nn.forward(trunk, x)
    pred, head_cache = nn.forward(head, h)
    err = pred[:, 0] - y
    loss = float((err * err).mean())
    g = (2.0 / len(y)) * err[:, None]
    head_grads, g_h = nn.backward(head, head_cache, g)
    trunk_grads, _ = nn.backward(trunk, trunk_cache, g_h)
    return loss, trunk_grads, head_grads


def _child_seeds(seed: int, n: int) -> list[int]:
    return [int(s.generate_state(1, np.uint64)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def init_model(cfg: TrainConfig, feature_dim: int) -> ModelCheckpoint:
    s_enc, s_cmp, s_head, _ = _child_seeds(cfg.seed, 4)
    encoder = nn.init_params(nn.encoder_sizes(feature_dim, cfg.embed_dim, cfg.encoder_hidden), s_enc)
    comparator = nn.init_params(nn.comparator_sizes(cfg.embed_dim, cfg.comparator_hidden), s_cmp)
    head = None
    if cfg.mode == "regression":
        head = nn.init_params([encoder.layers[-2].fan_out, 1], s_head)
    return ModelCheckpoint(cfg, feature_dim, encoder, comparator, head, cfg.seed)


def train(dataset: Sequence[RatedInstance], cfg: TrainConfig,
          progress: bool = False) -> tuple[ModelCheckpoint, list[dict]]:
    """Train a model; returns the checkpoint and one trace row per epoch."""
    cfg.validate()
    if len(dataset) < cfg.batch_size:
        raise ValueError(f"dataset has {len(dataset)} instances, fewer than one batch of {cfg.batch_size}")
    X = feature_matrix(dataset)
    y = scores_of(dataset)
    eta = np.array([inst.rating_variance for inst in dataset], dtype=float)
    model = init_model(cfg, X.shape[1])
    rng = np.random.default_rng(_child_seeds(cfg.seed, 4)[3])
    weights = cfg.weights

    encoder, comparator, head = model.encoder, model.comparator, model.regression_head
    if cfg.mode == "regression":
        trunk = encoder.sub(0, -1)
        # start the scalar head at the mean label
        last = head.layers[0]
        head = nn.MlpParams((nn.Layer(last.weight, np.full(1, y.mean()), last.activation),))
        tensors = trunk.tensors() + head.tensors()
    else:
        tensors = encoder.tensors() + comparator.tensors()
    state = AdamState.zeros_like(tensors)

    n = len(dataset)
    M = cfg.batch_size
    trace = []
    for epoch in range(cfg.epochs):
        lr = cosine_lr(epoch, cfg.epochs, cfg.lr_max, cfg.lr_min)
        perm = rng.permutation(n)
        sums = np.zeros(4)
        batches = 0
        for start in range(0, n, M):
            b = perm[start:start + M]
            if len(b) < 3:
                continue
            if cfg.mode == "regression":
                loss, g_trunk, g_head = regression_batch_objective(trunk, head, X[b], y[b])
                tensors, state = adam_step(trunk.tensors() + head.tensors(), g_trunk + g_head, state, lr)
                k = len(trunk.layers) * 2
                trunk = trunk.with_tensors(tensors[:k])
                head = head.with_tensors(tensors[k:])
                sums += (0.0, 0.0, 0.0, loss)
            else:
                pairs, _ = select_balanced_pairs(y[b], cfg.pair_cap, cfg.theta, rng)
                if not pairs:
                    continue
                if cfg.mode == "uol":
                    triplets, _ = select_hard_triplets(y[b])
                    shape = (len(pairs), cfg.T, cfg.embed_dim)
                    eps = (rng.standard_normal(shape), rng.standard_normal(shape))
                    res = uol_batch_objective(encoder, comparator, X[b], eta[b], pairs, triplets, eps,
                                              weights, kl_normalized=cfg.kl_normalized)
                else:
                    res = uol_batch_objective(encoder, comparator, X[b], eta[b], pairs, [], None,
                                              weights, use_hinge=False, use_kl=False)
                tensors, state = adam_step(encoder.tensors() + comparator.tensors(),
                                           res.encoder_grads + res.comparator_grads, state, lr)
                k = len(encoder.layers) * 2
                encoder = encoder.with_tensors(tensors[:k])
                comparator = comparator.with_tensors(tensors[k:])
                sums += (res.ce, res.hinge, res.kl, res.total)
            batches += 1
        means = sums / max(batches, 1)
        row = {"epoch": epoch, "lr": lr, "ce": means[0], "hinge": means[1], "kl": means[2], "total": means[3]}
        trace.append(row)
        if progress:
            log.info("epoch %d lr %.3g total %.5f", epoch, lr, means[3])

    if cfg.mode == "regression":
        encoder = nn.MlpParams(trunk.layers + (encoder.layers[-1],))
    return replace(model, encoder=encoder, comparator=comparator, regression_head=head), trace


def encode_instances(model: ModelCheckpoint, instances: Sequence[RatedInstance]):
    mu, var, _ = nn.encode_batch(model.encoder, feature_matrix(instances))
    return mu, var


def reference_set_for(model: ModelCheckpoint, train_instances: Sequence[RatedInstance],
                      seed: Optional[int] = None) -> ReferenceSet:
    """Reference set from the training split, embedded with the model's encoder."""
    cfg = model.config
    mu, var = encode_instances(model, train_instances)
    rng = np.random.default_rng(_child_seeds(cfg.seed if seed is None else seed, 5)[4])
    return build_reference_set(list(train_instances), mu, var, rng, cfg.ref_cap, cfg.ref_width)


def predict_scores(model: ModelCheckpoint, instances: Sequence[RatedInstance],
                   refset: Optional[ReferenceSet] = None, seed: Optional[int] = None) -> np.ndarray:
    cfg = model.config
    X = feature_matrix(instances)
    if cfg.mode == "regression":
        h, _ = nn.forward(model.encoder.sub(0, -1), X)
        out, _ = nn.forward(model.regression_head, h)
        return np.clip(out[:, 0], 1.0, 5.0)
    if refset is None or len(refset) == 0:
        raise ValueError("order-based modes need a non-empty reference set")
    mu, var, _ = nn.encode_batch(model.encoder, X)
    bt = cfg.bt
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed if seed is None else seed, 7]))
    R, D = len(refset), mu.shape[1]
    preds = np.empty(len(instances))
    for i in range(len(instances)):
        if cfg.mode == "uol":
            e1 = rng.standard_normal((R, cfg.T_eval, D))
            e2 = rng.standard_normal((R, cfg.T_eval, D))
            logits = compare_to_references(model.comparator, mu[i], var[i], refset, e1, e2)
        else:
            logits = compare_to_references(model.comparator, mu[i], var[i], refset, None, None)
        preds[i] = estimate_from_arrays(refset.scores, logits_to_ordinals(logits), bt)
    return preds


def evaluate(model: ModelCheckpoint, dataset: Sequence[RatedInstance],
             refset: Optional[ReferenceSet] = None, target: str = "mean",
             seed: Optional[int] = None) -> MetricsReport:
    """Metrics of predicted scores against ``mean_score`` or ``true_score``."""
    preds = predict_scores(model, dataset, refset, seed)
    return compute_metrics(preds, scores_of(dataset, target))
