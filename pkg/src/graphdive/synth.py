"""Synthetic imbalanced graph benchmark with motif-defined classes.

Negatives are random trees. Positives are random trees with one extra edge
that closes a triangle or, for a ``diversity`` fraction of the positives, a
4-cycle (no triangle). Node features loosely mimic molecular atom features:
atom type one-hot (4), degree one-hot (1, 2, 3, 4+), ring membership; edge
features are a bond type one-hot (single, double, ring). Gaussian noise of
scale ``noise`` is added to every feature.
"""
from __future__ import annotations

import dataclasses
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from graphdive.config import ConfigError, parse_kv
from graphdive.graph import Dataset, Graph, LabelSet, undirected

NODE_FEATS = 9
EDGE_FEATS = 3
_ATOM_P = np.array([0.5, 0.25, 0.15, 0.1])


@dataclass(frozen=True)
class SynthSpec:
    n: int = 1000
    pos_ratio: float = 0.05
    min_nodes: int = 6
    max_nodes: int = 14
    noise: float = 0.5
    diversity: float = 0.0
    seed: int = 0
    split_ratios: tuple[float, ...] = (0.8, 0.1, 0.1)

    def __post_init__(self):
        if not 0.0 < self.pos_ratio < 1.0:
            raise ValueError("pos_ratio must lie in (0, 1)")
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.min_nodes > self.max_nodes:
            raise ValueError("empty node count range")
        if self.min_nodes < 4:
            raise ValueError("min_nodes must be >= 4 to fit every motif")
        if not 0.0 <= self.diversity <= 1.0:
            raise ValueError("diversity must lie in [0, 1]")
        if self.noise < 0:
            raise ValueError("noise must be nonnegative")

    @classmethod
    def from_dict(cls, data: dict) -> "SynthSpec":
        kwargs = {}
        for f in dataclasses.fields(cls):
            if f.name not in data:
                continue
            v = data[f.name]
            if f.name == "split_ratios":
                kwargs[f.name] = tuple(float(x) for x in str(v).split(",")) if isinstance(v, str) else tuple(v)
            elif isinstance(f.default, int):
                kwargs[f.name] = int(v)
            else:
                kwargs[f.name] = float(v)
        unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigError(f"unknown synth keys {sorted(unknown)}")
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str | Path) -> "SynthSpec":
        return cls.from_dict(parse_kv(Path(path).read_text()))


def _random_tree(k: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    return [(int(rng.integers(0, i)), i) for i in range(1, k)]


def _distances(k: int, pairs) -> np.ndarray:
    adj = [[] for _ in range(k)]
    for u, v in pairs:
        adj[u].append(v)
        adj[v].append(u)
    dist = np.full((k, k), -1, dtype=int)
    for s in range(k):
        dist[s, s] = 0
        q = deque([s])
        while q:
            u = q.popleft()
            for w in adj[u]:
                if dist[s, w] < 0:
                    dist[s, w] = dist[s, u] + 1
                    q.append(w)
    return dist


def _ring_nodes(k: int, pairs, extra: tuple[int, int]) -> set[int]:
    """Nodes on the unique cycle created by adding ``extra`` to a tree."""
    adj = [[] for _ in range(k)]
    for u, v in pairs:
        adj[u].append(v)
        adj[v].append(u)
    a, b = extra
    prev = {a: None}
    q = deque([a])
    while q:
        u = q.popleft()
        for w in adj[u]:
            if w not in prev:
                prev[w] = u
                q.append(w)
    path, cur = [], b
    while cur is not None:
        path.append(cur)
        cur = prev[cur]
    return set(path)


def make_graph(k: int, motif: str | None, noise: float, rng: np.random.Generator) -> Graph:
    """One graph with ``k`` nodes; ``motif`` in {None, "triangle", "cycle4"}."""
    gap = {"triangle": 2, "cycle4": 3}
    while True:
        pairs = _random_tree(k, rng)
        if motif is None:
            extra = None
            break
        dist = _distances(k, pairs)
        cand = np.argwhere(np.triu(dist == gap[motif]))
        if len(cand):
            u, v = cand[rng.integers(len(cand))]
            extra = (int(u), int(v))
            break
    ring = _ring_nodes(k, pairs, extra) if extra else set()
    all_pairs = pairs + ([extra] if extra else [])

    deg = np.zeros(k, dtype=int)
    for u, v in all_pairs:
        deg[u] += 1
        deg[v] += 1
    x = np.zeros((k, NODE_FEATS))
    x[np.arange(k), rng.choice(4, size=k, p=_ATOM_P)] = 1.0
    x[np.arange(k), 4 + np.clip(deg, 1, 4) - 1] = 1.0
    x[list(ring), 8] = 1.0

    e = np.zeros((len(all_pairs), EDGE_FEATS))
    for i, (u, v) in enumerate(all_pairs):
        if u in ring and v in ring:
            e[i, 2] = 1.0
        else:
            e[i, 0 if rng.random() < 0.8 else 1] = 1.0
    if noise > 0:
        x = x + rng.normal(0.0, noise, size=x.shape)
        e = e + rng.normal(0.0, noise, size=e.shape)
    return undirected(k, all_pairs, x, e)


def has_triangle(g: Graph) -> bool:
    nbrs = [set() for _ in range(g.num_nodes)]
    for u, v in g.edges:
        nbrs[u].add(int(v))
    return any(nbrs[u] & nbrs[v] for u, v in g.edges)


def has_cycle(g: Graph) -> bool:
    """An undirected simple graph has a cycle iff some component has E >= V."""
    return g.num_edges // 2 > g.num_nodes - _components(g)


def _components(g: Graph) -> int:
    parent = list(range(g.num_nodes))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for u, v in g.edges:
        parent[find(int(u))] = find(int(v))
    return len({find(a) for a in range(g.num_nodes)})


def synth_generate(spec: SynthSpec) -> Dataset:
    """Deterministic benchmark for a given spec (seed included), with splits."""
    from graphdive.training import split_dataset

    rng = np.random.default_rng(spec.seed)
    n_pos = int(round(spec.pos_ratio * spec.n))
    labels = np.zeros(spec.n)
    pos_idx = rng.choice(spec.n, size=n_pos, replace=False)
    labels[pos_idx] = 1.0
    motif: list[str | None] = [None] * spec.n
    n_div = int(round(spec.diversity * n_pos))
    for j, i in enumerate(rng.permutation(pos_idx)):
        motif[i] = "cycle4" if j < n_div else "triangle"
    graphs = [
        make_graph(int(rng.integers(spec.min_nodes, spec.max_nodes + 1)), motif[i], spec.noise, rng)
        for i in range(spec.n)
    ]
    ds = Dataset(graphs, LabelSet.full(labels))
    return ds.with_split(split_dataset(ds, "random_stratified", spec.split_ratios, spec.seed))
