"""Reference imbalanced-learning losses: BCE, focal, inverse-frequency BCE."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from graphdive.graph import LabelSet
from graphdive.moe import PROB_EPS, _masked_mean, bernoulli_loglik
from graphdive.numerics import autodiff as ad
from graphdive.numerics.autodiff import Tensor

DEFAULT_FOCAL_GAMMA = 2.0


def bce(p, y):
    p = np.clip(np.asarray(p, dtype=np.float64), PROB_EPS, 1.0 - PROB_EPS)
    y = np.asarray(y, dtype=np.float64)
    out = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
    return float(out) if out.ndim == 0 else out


def focal(p, y, gamma: float = DEFAULT_FOCAL_GAMMA):
    """``-(1 - p_t)^gamma log p_t`` with ``p_t`` the true-class probability."""
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    p = np.clip(np.asarray(p, dtype=np.float64), PROB_EPS, 1.0 - PROB_EPS)
    y = np.asarray(y, dtype=np.float64)
    pt = y * p + (1.0 - y) * (1.0 - p)
    out = -((1.0 - pt) ** gamma) * np.log(pt)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ClassWeights:
    """Per-task weights for the positive and negative class.

    ``degenerate[t]`` is set when task ``t`` lacks one of the classes; the
    weights for such a task are left at 1.
    """

    positive: np.ndarray
    negative: np.ndarray
    degenerate: np.ndarray

    @property
    def ok(self) -> bool:
        return not bool(np.any(self.degenerate))

    def as_matrix(self, y: np.ndarray) -> np.ndarray:
        return np.where(y == 1.0, self.positive[None, :], self.negative[None, :])


def inverse_frequency_weights(labels: LabelSet) -> ClassWeights:
    """``weight_c = n_task / (2 * count_c)`` over the labelled entries of each task."""
    pos = np.zeros(labels.T)
    neg = np.zeros(labels.T)
    bad = np.zeros(labels.T, dtype=bool)
    for t in range(labels.T):
        m = labels.mask[:, t]
        n_pos = float(np.sum(labels.values[m, t] == 1.0))
        n = float(m.sum())
        n_neg = n - n_pos
        if n_pos == 0 or n_neg == 0:
            bad[t] = True
            pos[t] = neg[t] = 1.0
        else:
            pos[t] = n / (2.0 * n_pos)
            neg[t] = n / (2.0 * n_neg)
    return ClassWeights(pos, neg, bad)


# ---- tape losses over predicted probabilities (B, T) -----------------------------


def bce_loss_t(prob: Tensor, y, mask) -> Tensor:
    mask_b = np.asarray(mask, dtype=bool)
    ll = bernoulli_loglik(prob, np.where(mask_b, y, 0.0))
    return _masked_mean(-ll, mask_b.astype(np.float64))


def focal_loss_t(prob: Tensor, y, mask, gamma: float = DEFAULT_FOCAL_GAMMA) -> Tensor:
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    mask_b = np.asarray(mask, dtype=bool)
    y = np.where(mask_b, y, 0.0)
    q = ad.clip(prob, PROB_EPS, 1.0 - PROB_EPS)
    pt = y * q + (1.0 - y) * (1.0 - q)
    per_pair = -(ad.power(1.0 - pt, gamma) * ad.log(pt))
    return _masked_mean(per_pair, mask_b.astype(np.float64))


def reweighted_bce_loss_t(prob: Tensor, y, mask, weights: ClassWeights) -> Tensor:
    mask_b = np.asarray(mask, dtype=bool)
    y = np.where(mask_b, y, 0.0)
    w = weights.as_matrix(y)
    ll = bernoulli_loglik(prob, y)
    return _masked_mean(-(ll * w), mask_b.astype(np.float64))
