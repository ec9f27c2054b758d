"""Gradient-check suite over loss variants, backbones and expert counts."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from graphdive.baselines import inverse_frequency_weights
from graphdive.config import TrainConfig
from graphdive.graph import Graph, LabelSet, undirected
from graphdive.model import GraphDive, make_batch_loss
from graphdive.numerics import ParamStore, grad_check

# (variant, lambda, focal gamma)
LOSS_CASES: tuple[tuple[str, float, float], ...] = (
    ("pri", 0.0, 2.0),
    ("post", 0.0, 2.0),
    ("post", 1.0, 2.0),
    ("post", 10.0, 2.0),
    ("baseline_bce", 0.0, 2.0),
    ("baseline_focal", 0.0, 2.0),
    ("baseline_reweight", 0.0, 2.0),
)


@dataclass(frozen=True)
class GradCheckResult:
    variant: str
    lam: float
    backbone: str
    M: int
    seed: int
    error: float

    def label(self) -> str:
        lam = f" lam={self.lam:g}" if self.variant == "post" else ""
        return f"{self.variant}{lam} {self.backbone} M={self.M} seed={self.seed}"


def _graph(rng: np.random.Generator, f_v: int, f_e: int) -> Graph:
    n = int(rng.integers(3, 7))
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < 0.5]
    return undirected(n, pairs, rng.normal(size=(n, f_v)), rng.normal(size=(len(pairs), f_e)))


def check_one(
    variant: str, lam: float, backbone: str, M: int, seed: int,
    base: TrainConfig | None = None, n_graphs: int = 4, T: int = 1, f_v: int = 9, f_e: int = 3,
    h: float = 1e-5,
) -> GradCheckResult:
    base = base or TrainConfig(d=8, K=2)
    cfg = base.replace(variant=variant, lam=lam, backbone=backbone, M=M, seed=seed)
    rng = np.random.default_rng([seed, 17])
    graphs = [_graph(rng, f_v, f_e) for _ in range(n_graphs)]
    y = (rng.random((n_graphs, T)) < 0.5).astype(np.float64)
    y[0], y[1] = 1.0, 0.0
    mask = np.ones_like(y, dtype=bool)
    model = GraphDive.init(cfg, f_v, f_e, T)
    # move biases and GIN eps off their zero init so every path is exercised
    for name in model.store.names():
        if name.endswith(".b") or name.endswith(".eps"):
            model.store[name][...] = rng.normal(scale=0.1, size=model.store[name].shape)
    weights = inverse_frequency_weights(LabelSet.full(y)) if variant == "baseline_reweight" else None
    loss_fn = make_batch_loss(model, graphs, y, mask, weights)
    err = grad_check(loss_fn, model.store, h)
    return GradCheckResult(variant, lam, backbone, cfg.experts, seed, err)


def gradient_suite(
    seeds: Sequence[int] = (0, 1, 2, 3, 4),
    backbones: Iterable[str] = ("gcn", "gin"),
    expert_counts: Iterable[int] = (1, 3),
    base: TrainConfig | None = None,
) -> list[GradCheckResult]:
    out = []
    for variant, lam, _ in LOSS_CASES:
        for kind in backbones:
            for M in expert_counts:
                for seed in seeds:
                    out.append(check_one(variant, lam, kind, M, seed, base))
    return out
