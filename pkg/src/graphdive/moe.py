"""Mixture-of-diverse-experts classification head.

Given a graph embedding ``x`` the gate yields a prior over ``M`` experts,
``softmax(x W_g / tau)``, and expert ``z`` predicts every task with its own
linear map followed by a sigmoid. Shapes used throughout, for a batch of
``B`` embeddings and ``T`` tasks:

* gate log-prior ``(B, G, M)`` with ``G = T`` for individual gates, else 1
* expert probabilities and Bernoulli log-likelihoods ``(B, T, M)``

Column ``t * M + z`` of the packed expert (and individual gate) matrices
belongs to task ``t``, expert ``z``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from graphdive.numerics import autodiff as ad
from graphdive.numerics import glorot
from graphdive.numerics.autodiff import Tensor

GATE_MODES = ("single_task", "shared", "individual")
PROB_EPS = 1e-12


@dataclass
class MoeParams:
    """Gate prototypes, per-expert projections and head hyperparameters."""

    M: int
    T: int
    d: int
    tau: float = 1.0
    gate_mode: str = "individual"
    cosine: bool = False
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("need at least one expert")
        if not self.tau > 0:
            raise ValueError(f"temperature must be positive, got {self.tau}")
        if self.gate_mode not in GATE_MODES:
            raise ValueError(f"unknown gate mode {self.gate_mode!r}")
        if self.gate_mode == "single_task" and self.T != 1:
            raise ValueError("single_task gate mode needs exactly one task")

    @classmethod
    def init(
        cls,
        d: int,
        T: int,
        M: int,
        tau: float = 1.0,
        gate_mode: str = "individual",
        gate_bias: bool = False,
        cosine: bool = False,
        rng: np.random.Generator | None = None,
    ) -> "MoeParams":
        rng = rng if rng is not None else np.random.default_rng(0)
        p = cls(M, T, d, tau, gate_mode, cosine)
        # experts first: an M=1 head draws the same expert weights whatever the gate layout
        p.arrays["expert.W"] = glorot(rng, d, T, shape=(d, T * M))
        p.arrays["expert.b"] = np.zeros((1, T * M))
        p.arrays["gate.W"] = glorot(rng, d, M, shape=(d, p.G * M))
        if gate_bias:
            p.arrays["gate.b"] = np.zeros((1, p.G * M))
        return p

    @property
    def G(self) -> int:
        return self.T if self.gate_mode == "individual" else 1

    @property
    def gate_bias(self) -> bool:
        return "gate.b" in self.arrays

    def names(self) -> list[str]:
        return list(self.arrays)

    def expert_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Expert weights ``(M, d, T)`` and biases ``(M, T)``."""
        W = self.arrays["expert.W"].reshape(self.d, self.T, self.M).transpose(2, 0, 1)
        b = self.arrays["expert.b"].reshape(self.T, self.M).T
        return W, b


# ---- tape-level building blocks ----------------------------------------------


def gate_logits(x: Tensor, params: Mapping, p: MoeParams) -> Tensor:
    W = ad.as_tensor(params["gate.W"])
    if p.cosine:
        x = x / ad.sqrt(ad.tsum(x * x, axis=1, keepdims=True) + 1e-24)
        W = W / ad.sqrt(ad.tsum(W * W, axis=0, keepdims=True) + 1e-24)
    z = ad.matmul(x, W)
    if p.gate_bias:
        z = z + ad.as_tensor(params["gate.b"])
    return ad.reshape(z, (x.shape[0], p.G, p.M)) * (1.0 / p.tau)


def gate_log_prior(x: Tensor, params: Mapping, p: MoeParams) -> Tensor:
    return ad.log_softmax(gate_logits(x, params, p), axis=-1)


def expert_probs(x: Tensor, params: Mapping, p: MoeParams) -> Tensor:
    z = ad.matmul(x, ad.as_tensor(params["expert.W"])) + ad.as_tensor(params["expert.b"])
    return ad.sigmoid(ad.reshape(z, (x.shape[0], p.T, p.M)))


def bernoulli_loglik(prob: Tensor, y: np.ndarray) -> Tensor:
    """``y log q + (1-y) log(1-q)`` with ``q`` clipped to [1e-12, 1-1e-12]."""
    q = ad.clip(prob, PROB_EPS, 1.0 - PROB_EPS)
    return y * ad.log(q) + (1.0 - y) * ad.log(1.0 - q)


def loglik_value(prob: np.ndarray, y: np.ndarray) -> np.ndarray:
    q = np.clip(prob, PROB_EPS, 1.0 - PROB_EPS)
    return y * np.log(q) + (1.0 - y) * np.log(1.0 - q)


def log_posterior_value(log_prior: np.ndarray, loglik: np.ndarray) -> np.ndarray:
    """Bayes update in log space: normalize ``prior * likelihood`` over experts."""
    joint = log_prior + loglik
    m = np.max(joint, axis=-1, keepdims=True)
    return joint - (m + np.log(np.sum(np.exp(joint - m), axis=-1, keepdims=True)))


def _masked_mean(per_pair: Tensor, mask: np.ndarray) -> Tensor:
    count = float(np.sum(mask))
    if count == 0:
        raise ValueError("every label in the batch is masked")
    return ad.tsum(per_pair * mask) * (1.0 / count)


def _labels3(y: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return np.where(mask, y, 0.0)[:, :, None]


def pri_loss_t(x: Tensor, y, mask, params: Mapping, p: MoeParams) -> Tensor:
    """Mean over labelled pairs of ``-sum_z prior_z log p(y | x, z)``."""
    mask = np.asarray(mask, dtype=np.float64)
    prior = ad.exp(gate_log_prior(x, params, p))
    ll = bernoulli_loglik(expert_probs(x, params, p), _labels3(y, mask.astype(bool)))
    return _masked_mean(-ad.tsum(prior * ll, axis=-1), mask)


def posterior_value(x: Tensor, y, mask, params: Mapping, p: MoeParams) -> np.ndarray:
    """E-step: posterior ``(B, T, M)`` under the current values, as a constant."""
    log_prior = gate_log_prior(ad.constant(x), _values(params), p).value
    probs = expert_probs(ad.constant(x), _values(params), p).value
    ll = loglik_value(probs, _labels3(y, np.asarray(mask, dtype=bool)))
    return np.exp(log_posterior_value(log_prior, ll))


def post_loss_t(
    x: Tensor, y, mask, params: Mapping, p: MoeParams, lam: float,
    frozen_post: np.ndarray | None = None,
) -> Tensor:
    """Posterior-weighted loss plus ``lam * KL(post || prior)``.

    ``post`` is a constant (gradients blocked); when ``frozen_post`` is not
    given it is computed from the current parameter values.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    mask_b = np.asarray(mask, dtype=bool)
    maskf = mask_b.astype(np.float64)
    log_prior = gate_log_prior(x, params, p)
    ll = bernoulli_loglik(expert_probs(x, params, p), _labels3(y, mask_b))
    if frozen_post is None:
        log_post = log_posterior_value(log_prior.value, ll.value)
    else:
        with np.errstate(divide="ignore"):
            log_post = np.log(frozen_post)
    post = np.exp(log_post)
    fit = -ad.tsum(post * ll, axis=-1)
    if lam == 0:
        return _masked_mean(fit, maskf)
    # post * log post with 0 log 0 = 0
    with np.errstate(invalid="ignore"):
        ent = np.sum(np.where(post > 0, post * log_post, 0.0), axis=-1)
    kl = ent - ad.tsum(post * log_prior, axis=-1)
    return _masked_mean(fit + lam * kl, maskf)


def mixture_prob_t(x: Tensor, params: Mapping, p: MoeParams) -> Tensor:
    """``p(y=1 | x) = sum_z prior_z p(y=1 | x, z)``, shape ``(B, T)``."""
    prior = ad.exp(gate_log_prior(x, params, p))
    return ad.tsum(prior * expert_probs(x, params, p), axis=-1)


def mean_mix_prob_t(x: Tensor, params: Mapping, p: MoeParams) -> Tensor:
    return ad.mean(expert_probs(x, params, p), axis=-1)


def mean_mix_loss_t(x: Tensor, y, mask, params: Mapping, p: MoeParams) -> Tensor:
    mask_b = np.asarray(mask, dtype=bool)
    ll = bernoulli_loglik(mean_mix_prob_t(x, params, p), np.where(mask_b, y, 0.0))
    return _masked_mean(-ll, mask_b.astype(np.float64))


def _values(params: Mapping) -> dict[str, np.ndarray]:
    return {k: (v.value if isinstance(v, Tensor) else v) for k, v in params.items()}


# ---- numpy-level operations ----------------------------------------------------


def _batch(x) -> tuple[Tensor, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    return ad.Tensor(x[None, :] if single else x), single


def _gate_row(p: MoeParams, task: int | None) -> int:
    if task is not None and not 0 <= task < p.T:
        raise IndexError(f"task {task} out of range for T={p.T}")
    if p.gate_mode == "individual":
        if task is None:
            if p.T == 1:
                return 0
            raise ValueError("individual gates need a task index")
        return task
    return 0


def _task(p: MoeParams, task: int | None) -> int:
    if task is None:
        if p.T != 1:
            raise ValueError("task index required when T > 1")
        return 0
    if not 0 <= task < p.T:
        raise IndexError(f"task {task} out of range for T={p.T}")
    return task


def gate_prior(x, p: MoeParams, task: int | None = None) -> np.ndarray:
    """Prior over experts: ``(M,)`` for one embedding, ``(B, M)`` for a batch."""
    g = _gate_row(p, task)
    xt, single = _batch(x)
    out = np.exp(gate_log_prior(xt, p.arrays, p).value[:, g, :])
    return out[0] if single else out


def expert_predict(x, p: MoeParams) -> np.ndarray:
    """``p(y=1 | x, z)`` per expert and task: ``(M, T)`` (or ``(B, M, T)``)."""
    xt, single = _batch(x)
    out = expert_probs(xt, p.arrays, p).value.transpose(0, 2, 1)
    return out[0] if single else out


def mixture_predict(x, p: MoeParams, task: int | None = None):
    t = _task(p, task)
    xt, single = _batch(x)
    out = mixture_prob_t(xt, p.arrays, p).value[:, t]
    return float(out[0]) if single else out


def mean_mix_predict(x, p: MoeParams, task: int | None = None):
    """Gate ablation: arithmetic mean of the experts' probabilities."""
    t = _task(p, task)
    xt, single = _batch(x)
    out = mean_mix_prob_t(xt, p.arrays, p).value[:, t]
    return float(out[0]) if single else out


def posterior(x, y, p: MoeParams, task: int | None = None, mask: bool = True) -> np.ndarray:
    """Posterior over experts given the observed label (gradient-blocked)."""
    if not mask:
        raise ValueError("posterior is undefined for a masked label")
    t = _task(p, task)
    xt, single = _batch(x)
    B = xt.shape[0]
    yv = np.broadcast_to(np.asarray(y, dtype=np.float64), (B,))
    if not np.all((yv == 0) | (yv == 1)):
        raise ValueError("labels must be 0 or 1")
    Y = np.zeros((B, p.T))
    Y[:, t] = yv
    post = posterior_value(xt, Y, np.ones((B, p.T), dtype=bool), p.arrays, p)[:, t, :]
    return post[0] if single else post


def _pairs(x, y, mask):
    xt, _ = _batch(x)
    y = np.asarray(y, dtype=np.float64).reshape(xt.shape[0], -1)
    mask = np.ones(y.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool).reshape(y.shape)
    return xt, y, mask


def loss_pri(x, y, p: MoeParams, mask=None) -> float:
    xt, y, mask = _pairs(x, y, mask)
    return float(pri_loss_t(xt, y, mask, p.arrays, p).value)


def loss_post(x, y, p: MoeParams, lam: float, mask=None) -> float:
    xt, y, mask = _pairs(x, y, mask)
    return float(post_loss_t(xt, y, mask, p.arrays, p, lam).value)


def kl_divergence(q: np.ndarray, log_p: np.ndarray) -> float:
    q = np.asarray(q, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        logq = np.log(q)
        return float(np.sum(np.where(q > 0, q * (logq - log_p), 0.0)))


def elbo_probe(x, y: int, q, p: MoeParams, task: int | None = None) -> tuple[float, float]:
    """Mixture log-likelihood and the variational lower bound for ``q``.

    ``lower = E_q[log p(y | x, z)] - KL(q || prior)``; the gap equals
    ``KL(q || posterior)`` and so is nonnegative and vanishes at the posterior.
    """
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (p.M,) or np.any(q < 0) or abs(q.sum() - 1.0) > 1e-10:
        raise ValueError("q must be a probability vector over the experts")
    t = _task(p, task)
    g = _gate_row(p, t)
    xt, _ = _batch(np.asarray(x, dtype=np.float64).reshape(-1))
    log_prior = gate_log_prior(xt, p.arrays, p).value[0, g]
    probs = expert_probs(xt, p.arrays, p).value[0, t]
    ll = loglik_value(probs, float(y))
    joint = log_prior + ll
    m = np.max(joint)
    log_lik = float(m + np.log(np.sum(np.exp(joint - m))))
    lower = float(np.sum(np.where(q > 0, q * ll, 0.0))) - kl_divergence(q, log_prior)
    return log_lik, lower
