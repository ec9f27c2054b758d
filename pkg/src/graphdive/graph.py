"""Graph and dataset data model.

Undirected graphs are stored as doubled directed edge lists: every (u, v)
has a matching (v, u) with identical edge features. Self loops are never
stored; layers add the self contribution themselves. Missing labels are an
explicit boolean mask rather than a sentinel value.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

SPLITS = ("train", "valid", "test")


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Graph:
    """One sample: node count, directed edges, node and edge attributes.

    ``edges`` is an ``(E, 2)`` integer array of ``(src, dst)`` pairs and
    ``edge_feats`` row ``i`` belongs to ``edges[i]``. Construction does not
    validate; call :func:`validate_graph` for a report.
    """

    num_nodes: int
    edges: np.ndarray
    node_feats: np.ndarray
    edge_feats: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.intp).reshape(-1, 2)
        node_feats = np.asarray(self.node_feats, dtype=np.float64)
        if node_feats.ndim == 1:
            node_feats = node_feats.reshape(-1, 1)
        edge_feats = np.asarray(self.edge_feats, dtype=np.float64)
        if edge_feats.ndim == 1:
            edge_feats = (
                edge_feats.reshape(len(edges), -1) if len(edges) else edge_feats.reshape(0, 0)
            )
        object.__setattr__(self, "num_nodes", int(self.num_nodes))
        object.__setattr__(self, "edges", _frozen(np.array(edges)))
        object.__setattr__(self, "node_feats", _frozen(np.array(node_feats)))
        object.__setattr__(self, "edge_feats", _frozen(np.array(edge_feats)))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def src(self) -> np.ndarray:
        return self.edges[:, 0]

    @property
    def dst(self) -> np.ndarray:
        return self.edges[:, 1]

    def in_degree(self) -> np.ndarray:
        return np.bincount(self.dst, minlength=self.num_nodes).astype(np.float64)

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.num_nodes == other.num_nodes
            and np.array_equal(self.edges, other.edges)
            and np.array_equal(self.node_feats, other.node_feats)
            and np.array_equal(self.edge_feats, other.edge_feats)
        )

    __hash__ = None


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def validate_graph(g: Graph) -> ValidationReport:
    """List every invariant violation of ``g``; violations are data, not errors."""
    problems: list[str] = []
    n = g.num_nodes
    if n < 1:
        problems.append(f"num_nodes must be positive, got {n}")
    if g.node_feats.shape[0] != n:
        problems.append(f"node_feats has {g.node_feats.shape[0]} rows, expected {n}")
    if g.edge_feats.shape[0] != g.num_edges:
        problems.append(
            f"edge_feats has {g.edge_feats.shape[0]} rows, expected {g.num_edges}"
        )
    if not np.all(np.isfinite(g.node_feats)):
        problems.append("node_feats contain non-finite values")
    if not np.all(np.isfinite(g.edge_feats)):
        problems.append("edge_feats contain non-finite values")

    in_range = True
    for i, (u, v) in enumerate(g.edges):
        if not (0 <= u < n and 0 <= v < n):
            problems.append(f"edge {i} ({u},{v}): endpoint out of range")
            in_range = False
        elif u == v:
            problems.append(f"edge {i} ({u},{v}): self loop")

    if in_range and g.edge_feats.shape[0] == g.num_edges:
        lookup: dict[tuple[int, int], int] = {}
        for i, (u, v) in enumerate(g.edges):
            lookup.setdefault((int(u), int(v)), i)
        for i, (u, v) in enumerate(g.edges):
            j = lookup.get((int(v), int(u)))
            if j is None:
                problems.append(f"edge {i} ({u},{v}): missing reverse edge")
            elif not np.array_equal(g.edge_feats[i], g.edge_feats[j]):
                problems.append(f"edge {i} ({u},{v}): reverse edge features differ")
    return ValidationReport(tuple(problems))


def permute_nodes(g: Graph, perm: Sequence[int]) -> Graph:
    """Relabel node ``i`` as ``perm[i]``; features and edges follow."""
    perm = np.asarray(perm, dtype=np.intp)
    n = g.num_nodes
    if perm.shape != (n,) or not np.array_equal(np.sort(perm), np.arange(n)):
        raise ValueError("perm must be a bijection on range(num_nodes)")
    node_feats = np.empty_like(g.node_feats)
    node_feats[perm] = g.node_feats
    edges = perm[g.edges] if g.num_edges else g.edges.copy()
    return Graph(n, edges, node_feats, g.edge_feats.copy())


def undirected(num_nodes: int, pairs, node_feats, pair_feats) -> Graph:
    """Build a graph from undirected pairs, doubling each with shared features."""
    pairs = np.asarray(pairs, dtype=np.intp).reshape(-1, 2)
    pair_feats = np.asarray(pair_feats, dtype=np.float64)
    width = pair_feats.shape[-1] if pair_feats.ndim == 2 else 0
    pair_feats = pair_feats.reshape(len(pairs), -1) if len(pairs) else np.zeros((0, width))
    edges = np.empty((2 * len(pairs), 2), dtype=np.intp)
    edges[0::2] = pairs
    edges[1::2] = pairs[:, ::-1]
    feats = np.repeat(pair_feats, 2, axis=0)
    return Graph(num_nodes, edges, node_feats, feats)


@dataclass(frozen=True, eq=False)
class LabelSet:
    """Binary labels ``(n, T)`` with a presence mask of the same shape.

    Masked entries of ``values`` are stored as 0 and never read.
    """

    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        mask = np.asarray(self.mask, dtype=bool).reshape(values.shape)
        values = np.where(mask, values, 0.0)
        if not np.all((values == 0.0) | (values == 1.0)):
            raise ValueError("labels must be 0 or 1")
        if values.shape[1] < 1:
            raise ValueError("need at least one task")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "mask", _frozen(mask))

    @classmethod
    def full(cls, values) -> "LabelSet":
        values = np.asarray(values, dtype=np.float64)
        return cls(values, np.ones(values.shape, dtype=bool))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1]

    def take(self, idx) -> "LabelSet":
        return LabelSet(self.values[idx], self.mask[idx])

    def __eq__(self, other):
        if not isinstance(other, LabelSet):
            return NotImplemented
        return np.array_equal(self.values, other.values) and np.array_equal(
            self.mask, other.mask
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Dataset:
    graphs: tuple[Graph, ...]
    labels: LabelSet
    split: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "graphs", tuple(self.graphs))
        if len(self.graphs) != self.labels.n:
            raise ValueError(
                f"{len(self.graphs)} graphs but {self.labels.n} label rows"
            )
        if self.split is not None:
            split = tuple(self.split)
            if len(split) != len(self.graphs):
                raise ValueError("split must tag every graph exactly once")
            bad = set(split) - set(SPLITS)
            if bad:
                raise ValueError(f"unknown split tags {sorted(bad)}")
            object.__setattr__(self, "split", split)

    def __len__(self) -> int:
        return len(self.graphs)

    @property
    def T(self) -> int:
        return self.labels.T

    def with_split(self, split) -> "Dataset":
        return Dataset(self.graphs, self.labels, tuple(split))

    def indices(self, name: str) -> np.ndarray:
        if self.split is None:
            raise ValueError("dataset has no split assignment")
        return np.array([i for i, s in enumerate(self.split) if s == name], dtype=np.intp)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.intp)
        split = None if self.split is None else tuple(self.split[i] for i in idx)
        return Dataset(tuple(self.graphs[i] for i in idx), self.labels.take(idx), split)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.graphs == other.graphs
            and self.labels == other.labels
            and self.split == other.split
        )

    __hash__ = None


@dataclass(frozen=True)
class TaskStats:
    positive: int
    negative: int
    missing: int

    @property
    def total(self) -> int:
        return self.positive + self.negative + self.missing

    @property
    def defined(self) -> bool:
        return self.positive + self.negative > 0

    @property
    def positive_ratio(self) -> float:
        """Positives over labelled samples; NaN when every label is missing."""
        labelled = self.positive + self.negative
        return self.positive / labelled if labelled else float("nan")


@dataclass(frozen=True)
class ClassStats:
    tasks: tuple[TaskStats, ...] = field(default_factory=tuple)

    def __getitem__(self, t: int) -> TaskStats:
        return self.tasks[t]

    def __len__(self) -> int:
        return len(self.tasks)


def class_stats(ds: Dataset | LabelSet) -> ClassStats:
    labels = ds.labels if isinstance(ds, Dataset) else ds
    out = []
    for t in range(labels.T):
        m = labels.mask[:, t]
        pos = int(np.sum(labels.values[m, t] == 1.0))
        present = int(m.sum())
        out.append(TaskStats(pos, present - pos, labels.n - present))
    return ClassStats(tuple(out))
