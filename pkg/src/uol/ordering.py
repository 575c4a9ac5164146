"""Order labels and the batch selection of training pairs and triplets."""
from __future__ import annotations

import enum
import math
from typing import NamedTuple, Sequence

import numpy as np


class OrderRelation(enum.Enum):
    LESS = "<"
    APPROX = "~"
    GREATER = ">"

    @property
    def onehot_index(self) -> int:
        """Position in the comparator output (approx, less, greater)."""
        return _ONEHOT[self]

    @property
    def bt_ordinal(self) -> int:
        """Ordinal used by the Bradley-Terry model: less=0, approx=1, greater=2."""
        return _ORDINAL[self]

    @classmethod
    def from_onehot_index(cls, idx: int) -> "OrderRelation":
        return _FROM_ONEHOT[int(idx)]

    @classmethod
    def from_bt_ordinal(cls, idx: int) -> "OrderRelation":
        return _FROM_ORDINAL[int(idx)]


_ONEHOT = {OrderRelation.APPROX: 0, OrderRelation.LESS: 1, OrderRelation.GREATER: 2}
_ORDINAL = {OrderRelation.LESS: 0, OrderRelation.APPROX: 1, OrderRelation.GREATER: 2}
_FROM_ONEHOT = {v: k for k, v in _ONEHOT.items()}
_FROM_ORDINAL = {v: k for k, v in _ORDINAL.items()}


# absorbs representation error so that e.g. |3.2 - 3.0| counts as 0.2
BOUNDARY_SLACK = 1e-9


class Pair(NamedTuple):
    i: int
    j: int
    relation: OrderRelation


class Triplet(NamedTuple):
    l: int
    m: int
    n: int


def encode_order(y_i: float, y_j: float, theta: float = 0.2) -> OrderRelation:
    if not (math.isfinite(y_i) and math.isfinite(y_j)):
        raise ValueError("scores must be finite")
    if not theta > 0:
        raise ValueError("theta must be positive")
    diff = y_i - y_j
    if abs(diff) <= theta + BOUNDARY_SLACK:
        return OrderRelation.APPROX
    return OrderRelation.LESS if diff < 0 else OrderRelation.GREATER


def select_hard_triplets(scores: Sequence[float]) -> tuple[list[Triplet], int]:
    """One hard triplet per anchor; returns (triplets, number of dropped anchors).

    Anchor l = i, m = (i + 1) mod M, and n minimises
    ||y_l - y_m| - |y_l - y_n|| over the rest, excluding exact ties of the two
    distances. The first minimiser in index order wins. Anchors with no valid n
    are dropped.
    """
    y = np.asarray(scores, dtype=float)
    M = y.shape[0]
    if M < 3:
        raise ValueError("hard triplet selection needs at least 3 instances")
    triplets = []
    dropped = 0
    idx = np.arange(M)
    for i in range(M):
        m = (i + 1) % M
        d12 = abs(y[i] - y[m])
        tmp = np.abs(d12 - np.abs(y[i] - y))
        valid = (idx != i) & (idx != m) & (tmp != 0)
        if not valid.any():
            dropped += 1
            continue
        tmp = np.where(valid, tmp, np.inf)
        triplets.append(Triplet(i, m, int(np.argmin(tmp))))
    return triplets, dropped


def select_balanced_pairs(scores: Sequence[float], N: int, theta: float,
                          rng: np.random.Generator) -> tuple[list[Pair], list[OrderRelation]]:
    """Balanced pair sampling within a batch.

    For each anchor, candidates exclude the anchor, its existing partners and
    instances already paired ``N`` times. Candidates closer than ``theta`` share
    probability 1/3 and the rest share 2/3; when one group is empty the other
    takes all the mass. Pairing is recorded symmetrically.
    """
    y = np.asarray(scores, dtype=float)
    M = y.shape[0]
    if M < 2:
        raise ValueError("pair selection needs at least 2 instances")
    if N < 1:
        raise ValueError("pair cap N must be >= 1")
    flags: list[list[int]] = [[] for _ in range(M)]
    pairs: list[Pair] = []
    for i in range(M):
        taken = set(flags[i])
        candidates = [j for j in range(M)
                      if j != i and j not in taken and len(flags[j]) < N]
        while len(flags[i]) < N and candidates:
            cand = np.asarray(candidates)
            close = np.abs(y[i] - y[cand]) < theta
            sim = int(close.sum())
            unsim = len(candidates) - sim
            if sim == 0 or unsim == 0:
                prob = np.full(len(candidates), 1.0 / len(candidates))
            else:
                prob = np.where(close, 1.0 / (3 * sim), 2.0 / (3 * unsim))
            k = int(rng.choice(len(candidates), p=prob))
            r = candidates.pop(k)
            flags[i].append(r)
            flags[r].append(i)
            pairs.append(Pair(i, r, encode_order(y[i], y[r], theta)))
    return pairs, [p.relation for p in pairs]


def pair_flags(pairs: Sequence[Pair], M: int) -> list[list[int]]:
    """Rebuild the symmetric adjacency lists from emitted pairs."""
    flags: list[list[int]] = [[] for _ in range(M)]
    for p in pairs:
        flags[p.i].append(p.j)
        flags[p.j].append(p.i)
    return flags
