"""GNN backbone plus mixture head, with one loss entry point per variant."""
from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from graphdive import baselines, gnn, moe
from graphdive.config import TrainConfig
from graphdive.graph import Graph
from graphdive.numerics import ParamStore
from graphdive.numerics.autodiff import Tensor


class GraphDive:
    """Parameters for one model; ``store`` shares arrays with both halves."""

    def __init__(self, backbone: gnn.BackboneParams, head: moe.MoeParams, cfg: TrainConfig):
        self.backbone = backbone
        self.head = head
        self.cfg = cfg
        self.store = ParamStore()
        for name, arr in backbone.arrays.items():
            backbone.arrays[name] = self.store.add(name, arr)
        for name, arr in head.arrays.items():
            head.arrays[name] = self.store.add(name, arr)

    @classmethod
    def init(cls, cfg: TrainConfig, f_v: int, f_e: int, T: int, seed: int | None = None) -> "GraphDive":
        rng = np.random.default_rng(cfg.seed if seed is None else seed)
        backbone = gnn.BackboneParams.init(cfg.backbone, f_v, f_e, cfg.d, cfg.K, rng)
        gate_mode = cfg.gate_mode
        if gate_mode == "single_task" and T != 1:
            raise ValueError("single_task gate mode needs exactly one task")
        head = moe.MoeParams.init(
            cfg.d, T, cfg.experts, cfg.tau, gate_mode,
            gate_bias=cfg.gate_bias, cosine=cfg.cosine_gate, rng=rng,
        )
        return cls(backbone, head, cfg)

    @classmethod
    def from_arrays(cls, cfg: TrainConfig, f_v: int, f_e: int, T: int, arrays: Mapping[str, np.ndarray]) -> "GraphDive":
        model = cls.init(cfg, f_v, f_e, T)
        model.store.load_values(dict(arrays))
        return model

    @property
    def T(self) -> int:
        return self.head.T

    def embed(self, batch: gnn.GraphBatch, params: Mapping | None = None) -> Tensor:
        params = self.store.arrays if params is None else params
        return gnn.forward(batch, params, self.backbone.kind, self.backbone.K)

    def loss(
        self,
        batch: gnn.GraphBatch,
        y: np.ndarray,
        mask: np.ndarray,
        params: Mapping,
        class_weights: baselines.ClassWeights | None = None,
        frozen_post: np.ndarray | None = None,
    ) -> Tensor:
        cfg, head = self.cfg, self.head
        x = self.embed(batch, params)
        v = cfg.variant
        if v == "pri":
            return moe.pri_loss_t(x, y, mask, params, head)
        if v == "post":
            return moe.post_loss_t(x, y, mask, params, head, cfg.lam, frozen_post)
        if v == "mean_mix":
            return moe.mean_mix_loss_t(x, y, mask, params, head)
        prob = moe.mixture_prob_t(x, params, head)
        if v == "baseline_bce":
            return baselines.bce_loss_t(prob, y, mask)
        if v == "baseline_focal":
            return baselines.focal_loss_t(prob, y, mask, cfg.focal_gamma)
        if class_weights is None:
            raise ValueError("baseline_reweight needs class weights")
        return baselines.reweighted_bce_loss_t(prob, y, mask, class_weights)

    def frozen_posterior(self, batch: gnn.GraphBatch, y, mask) -> np.ndarray:
        """E-step at the current parameter values."""
        x = self.embed(batch)
        return moe.posterior_value(x, y, mask, self.store.arrays, self.head)

    def predict_proba(self, graphs: gnn.GraphBatch | Sequence[Graph]) -> np.ndarray:
        """``p(y=1 | x)`` per graph and task, ``(B, T)``."""
        batch = gnn.GraphBatch.of(graphs)
        x = self.embed(batch)
        if self.cfg.variant == "mean_mix":
            return moe.mean_mix_prob_t(x, self.store.arrays, self.head).value
        return moe.mixture_prob_t(x, self.store.arrays, self.head).value

    def gate_weights(self, graphs: gnn.GraphBatch | Sequence[Graph]) -> np.ndarray:
        """Prior over experts, ``(B, G, M)``."""
        batch = gnn.GraphBatch.of(graphs)
        x = self.embed(batch)
        return np.exp(moe.gate_log_prior(x, self.store.arrays, self.head).value)


def make_batch_loss(model: GraphDive, graphs: Sequence[Graph], y, mask, class_weights=None):
    """Loss closure over store leaves with the posterior frozen at the base point."""
    batch = gnn.GraphBatch.of(graphs)
    frozen = model.frozen_posterior(batch, y, mask) if model.cfg.variant == "post" else None

    def loss_fn(leaves):
        return model.loss(batch, y, mask, leaves, class_weights, frozen)

    return loss_fn

