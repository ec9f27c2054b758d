"""Message-passing feature extractor (GCN or GIN layers) with mean readout.

Layer rules, for directed edges (u -> v) with encoded features enc(e_uv)
and in-degree deg(v):

GCN::

    m_v = sum_u (h_u W + enc(e_uv)) / sqrt((deg(u)+1)(deg(v)+1)) + h_v W / (deg(v)+1)
    h_v' = ReLU(m_v + b)

GIN::

    h_v' = MLP((1 + eps) h_v + sum_u ReLU(h_u + enc(e_uv)))
    MLP = Linear -> ReLU -> Linear, followed by ReLU

The last layer drops its trailing ReLU. Several graphs are processed at once
as one disjoint union (:class:`GraphBatch`).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from graphdive.graph import Graph
from graphdive.numerics import autodiff as ad
from graphdive.numerics import glorot
from graphdive.numerics.autodiff import Tensor

KINDS = ("gcn", "gin")


@dataclass
class BackboneParams:
    kind: str
    K: int
    d: int
    f_v: int
    f_e: int
    arrays: dict[str, np.ndarray]

    @classmethod
    def init(
        cls,
        kind: str,
        f_v: int,
        f_e: int,
        d: int = 64,
        K: int = 5,
        rng: np.random.Generator | None = None,
    ) -> "BackboneParams":
        kind = kind.lower()
        if kind not in KINDS:
            raise ValueError(f"unknown backbone {kind!r}, expected one of {KINDS}")
        if K < 1 or d < 1:
            raise ValueError("need K >= 1 and d >= 1")
        rng = rng if rng is not None else np.random.default_rng(0)
        a: dict[str, np.ndarray] = {
            "node_enc.W": glorot(rng, f_v, d),
            "node_enc.b": np.zeros((1, d)),
        }
        for k in range(K):
            pre = f"layer{k}."
            a[pre + "edge_enc.W"] = glorot(rng, f_e, d)
            a[pre + "edge_enc.b"] = np.zeros((1, d))
            if kind == "gcn":
                a[pre + "W"] = glorot(rng, d, d)
                a[pre + "b"] = np.zeros((1, d))
            else:
                a[pre + "eps"] = np.zeros((1, 1))
                a[pre + "mlp1.W"] = glorot(rng, d, d)
                a[pre + "mlp1.b"] = np.zeros((1, d))
                a[pre + "mlp2.W"] = glorot(rng, d, d)
                a[pre + "mlp2.b"] = np.zeros((1, d))
        return cls(kind, K, d, f_v, f_e, a)

    def names(self) -> list[str]:
        return list(self.arrays)


@dataclass
class NodeStates:
    h: np.ndarray
    k: int = 0


class GraphBatch:
    """Disjoint union of graphs with precomputed aggregation coefficients."""

    def __init__(self, graphs: Sequence[Graph]):
        if not graphs:
            raise ValueError("empty batch")
        counts = np.array([g.num_nodes for g in graphs], dtype=np.intp)
        if np.any(counts < 1):
            raise ValueError("cannot read out an empty graph")
        offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
        self.num_graphs = len(graphs)
        self.num_nodes = int(counts.sum())
        self.node_feats = np.concatenate([g.node_feats for g in graphs], axis=0)
        with_edges = [g.edge_feats for g in graphs if g.num_edges]
        self.edge_feats = (
            np.concatenate(with_edges, axis=0) if with_edges else np.zeros((0, 0))
        )
        edges = np.concatenate(
            [g.edges.reshape(-1, 2) + off for g, off in zip(graphs, offsets)], axis=0
        ).astype(np.intp)
        self.src = np.ascontiguousarray(edges[:, 0])
        self.dst = np.ascontiguousarray(edges[:, 1])
        self.node_graph = np.repeat(np.arange(self.num_graphs, dtype=np.intp), counts)
        deg = np.bincount(self.dst, minlength=self.num_nodes).astype(np.float64)
        self.deg = deg
        self.edge_coef = (1.0 / np.sqrt((deg[self.src] + 1.0) * (deg[self.dst] + 1.0)))[:, None]
        self.self_coef = (1.0 / (deg + 1.0))[:, None]
        self.inv_counts = (1.0 / counts.astype(np.float64))[:, None]

    @classmethod
    def of(cls, g: "Graph | GraphBatch | Sequence[Graph]") -> "GraphBatch":
        if isinstance(g, GraphBatch):
            return g
        if isinstance(g, Graph):
            return cls([g])
        return cls(list(g))


def _t(params: Mapping, name: str) -> Tensor:
    return ad.as_tensor(params[name])


def _check_widths(batch: GraphBatch, params: Mapping) -> None:
    f_v = ad.as_tensor(params["node_enc.W"]).shape[0]
    f_e = ad.as_tensor(params["layer0.edge_enc.W"]).shape[0]
    if batch.node_feats.shape[1] != f_v:
        raise ValueError(f"node feature width {batch.node_feats.shape[1]} != encoder {f_v}")
    if len(batch.src) and batch.edge_feats.shape[1] != f_e:
        raise ValueError(f"edge feature width {batch.edge_feats.shape[1]} != encoder {f_e}")


def encode_nodes(batch: GraphBatch, params: Mapping) -> Tensor:
    return ad.matmul(batch.node_feats, _t(params, "node_enc.W")) + _t(params, "node_enc.b")


def encode_edges(batch: GraphBatch, params: Mapping, k: int) -> Tensor:
    pre = f"layer{k}.edge_enc."
    ef = batch.edge_feats
    if ef.shape[0] == 0:
        return ad.constant(np.zeros((0, ad.as_tensor(params[pre + "b"]).shape[1])))
    return ad.matmul(ef, _t(params, pre + "W")) + _t(params, pre + "b")


def gcn_apply(h: Tensor, batch: GraphBatch, enc: Tensor, params: Mapping, k: int, last: bool) -> Tensor:
    pre = f"layer{k}."
    hw = ad.matmul(h, _t(params, pre + "W"))
    m = hw * batch.self_coef
    if len(batch.src):
        msg = (ad.gather(hw, batch.src) + enc) * batch.edge_coef
        m = m + ad.segment_sum(msg, batch.dst, batch.num_nodes)
    out = m + _t(params, pre + "b")
    return out if last else ad.relu(out)


def gin_apply(h: Tensor, batch: GraphBatch, enc: Tensor, params: Mapping, k: int, last: bool) -> Tensor:
    pre = f"layer{k}."
    z = h * (1.0 + _t(params, pre + "eps"))
    if len(batch.src):
        msg = ad.relu(ad.gather(h, batch.src) + enc)
        z = z + ad.segment_sum(msg, batch.dst, batch.num_nodes)
    z = ad.relu(ad.matmul(z, _t(params, pre + "mlp1.W")) + _t(params, pre + "mlp1.b"))
    out = ad.matmul(z, _t(params, pre + "mlp2.W")) + _t(params, pre + "mlp2.b")
    return out if last else ad.relu(out)


def readout(h: Tensor, batch: GraphBatch) -> Tensor:
    return ad.segment_sum(h, batch.node_graph, batch.num_graphs) * batch.inv_counts


def forward(batch: GraphBatch, params: Mapping, kind: str, K: int) -> Tensor:
    """Graph embeddings ``(num_graphs, d)`` on the tape."""
    _check_widths(batch, params)
    layer = gcn_apply if kind == "gcn" else gin_apply
    h = encode_nodes(batch, params)
    for k in range(K):
        h = layer(h, batch, encode_edges(batch, params, k), params, k, last=(k == K - 1))
    return readout(h, batch)


# ---- numpy-level operations --------------------------------------------------


def encode(g: Graph, p: BackboneParams) -> tuple[NodeStates, list[np.ndarray]]:
    batch = GraphBatch.of(g)
    _check_widths(batch, p.arrays)
    h0 = encode_nodes(batch, p.arrays).value
    edges = [encode_edges(batch, p.arrays, k).value for k in range(p.K)]
    return NodeStates(h0, 0), edges


def gcn_layer(h: NodeStates, g: Graph, p: BackboneParams, k: int, last: bool = False) -> NodeStates:
    batch = GraphBatch.of(g)
    _check_state(h, batch, p)
    enc = encode_edges(batch, p.arrays, k)
    return NodeStates(gcn_apply(ad.Tensor(h.h), batch, enc, p.arrays, k, last).value, h.k + 1)


def gin_layer(h: NodeStates, g: Graph, p: BackboneParams, k: int, last: bool = False) -> NodeStates:
    batch = GraphBatch.of(g)
    _check_state(h, batch, p)
    enc = encode_edges(batch, p.arrays, k)
    return NodeStates(gin_apply(ad.Tensor(h.h), batch, enc, p.arrays, k, last).value, h.k + 1)


def _check_state(h: NodeStates, batch: GraphBatch, p: BackboneParams) -> None:
    if h.h.shape != (batch.num_nodes, p.d):
        raise ValueError(f"node states {h.h.shape} do not match ({batch.num_nodes}, {p.d})")


def readout_mean(h: NodeStates | np.ndarray) -> np.ndarray:
    arr = h.h if isinstance(h, NodeStates) else np.asarray(h, dtype=np.float64)
    if arr.shape[0] == 0:
        raise ValueError("cannot read out an empty graph")
    return arr.mean(axis=0)


def extract(g: Graph, p: BackboneParams) -> np.ndarray:
    """Embedding ``x`` of one graph (or ``(B, d)`` for a list of graphs)."""
    out = forward(GraphBatch.of(g), p.arrays, p.kind, p.K).value
    return out[0] if isinstance(g, Graph) else out
