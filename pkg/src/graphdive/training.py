"""Training loop, EM epochs, splits, sweeps and evaluation of checkpoints."""
from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from graphdive import metrics
from graphdive.baselines import ClassWeights, inverse_frequency_weights
from graphdive.config import TrainConfig
from graphdive.gnn import GraphBatch
from graphdive.graph import SPLITS, Dataset
from graphdive.model import GraphDive
from graphdive.numerics import AdamState, adam_step, backward

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


# ---- splits ----------------------------------------------------------------------


def read_split_file(path: str | Path, n: int) -> tuple[str, ...]:
    """Read ``{"train": [...], "valid": [...], "test": [...]}`` index lists."""
    data = json.loads(Path(path).read_text())
    out: list[str | None] = [None] * n
    for name in SPLITS:
        for i in data.get(name, []):
            i = int(i)
            if not 0 <= i < n:
                raise ValueError(f"{path}: index {i} out of range for {n} graphs")
            if out[i] is not None:
                raise ValueError(f"{path}: graph {i} listed in more than one split")
            out[i] = name
    missing = [i for i, s in enumerate(out) if s is None]
    if missing:
        raise ValueError(f"{path}: {len(missing)} graphs have no split (first: {missing[0]})")
    return tuple(out)  # type: ignore[arg-type]


def _split_sizes(n: int, ratios: Sequence[float]) -> list[int]:
    n_train = int(round(ratios[0] * n))
    n_valid = int(round(ratios[1] * n))
    return [n_train, n_valid, n - n_train - n_valid]


def split_dataset(
    ds: Dataset,
    strategy: str = "random_stratified",
    ratios: Sequence[float] = (0.8, 0.1, 0.1),
    seed: int = 0,
    path: str | Path | None = None,
) -> tuple[str, ...]:
    """Assign every graph to train/valid/test.

    ``provided`` reads an index file verbatim (scaffold splits come from
    upstream). ``random_stratified`` splits positives and negatives of task
    0 separately so each split keeps the overall positive ratio.
    """
    if abs(sum(ratios) - 1.0) > 1e-9 or len(ratios) != 3:
        raise ValueError("ratios must be three numbers summing to 1")
    n = len(ds)
    if strategy == "provided":
        if path:
            return read_split_file(path, n)
        if ds.split is None:
            raise ValueError("provided split requested but none available")
        return ds.split
    if strategy != "random_stratified":
        raise ValueError(f"unknown split strategy {strategy!r}")

    rng = np.random.default_rng(seed)
    y = ds.labels.values[:, 0]
    m = ds.labels.mask[:, 0]
    groups = [np.flatnonzero(m & (y == 1)), np.flatnonzero(m & (y == 0)), np.flatnonzero(~m)]
    groups = [g for g in groups if len(g)]
    target = _split_sizes(n, ratios)
    taken = [0, 0, 0]
    assign = np.empty(n, dtype=object)
    for gi, idx in enumerate(groups):
        idx = rng.permutation(idx)
        if gi == len(groups) - 1:
            sizes = [target[s] - taken[s] for s in range(3)]
        else:
            sizes = _split_sizes(len(idx), ratios)
            sizes = [min(sz, target[s] - taken[s]) for s, sz in enumerate(sizes)]
            sizes[0] = len(idx) - sizes[1] - sizes[2]
        start = 0
        for s, size in enumerate(sizes):
            assign[idx[start:start + size]] = SPLITS[s]
            taken[s] += size
            start += size
    return tuple(str(a) for a in assign)


def resolve_split(ds: Dataset, cfg: TrainConfig) -> Dataset:
    if cfg.split == "auto":
        if ds.split is not None:
            return ds
        strategy = "random_stratified"
    else:
        strategy = cfg.split
    split = split_dataset(ds, strategy, cfg.split_ratios, cfg.seed, cfg.split_file or None)
    return ds.with_split(split)


# ---- history and checkpoints -------------------------------------------------------


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    valid_auc: list[float] = field(default_factory=list)
    wall_clock: list[float] = field(default_factory=list)
    best_epoch: int = -1

    def __len__(self) -> int:
        return len(self.train_loss)

    @property
    def best_valid_auc(self) -> float:
        return self.valid_auc[self.best_epoch] if self.best_epoch >= 0 else float("nan")

    def same_trajectory(self, other: "TrainHistory") -> bool:
        """Equality of everything except wall-clock timings."""
        return (
            _nan_equal(self.train_loss, other.train_loss)
            and _nan_equal(self.valid_auc, other.valid_auc)
            and self.best_epoch == other.best_epoch
        )

    def to_dict(self) -> dict:
        return {
            "train_loss": self.train_loss,
            "valid_auc": self.valid_auc,
            "wall_clock": self.wall_clock,
            "best_epoch": self.best_epoch,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainHistory":
        return cls(list(d["train_loss"]), list(d["valid_auc"]), list(d["wall_clock"]), int(d["best_epoch"]))

    def copy(self) -> "TrainHistory":
        return TrainHistory.from_dict(self.to_dict())


def _nan_equal(a: Sequence[float], b: Sequence[float]) -> bool:
    return len(a) == len(b) and all(x == y or (math.isnan(x) and math.isnan(y)) for x, y in zip(a, b))


@dataclass
class Checkpoint:
    """Everything needed to evaluate the best model or resume training.

    ``params``/``adam`` are the state after ``epoch`` completed epochs;
    ``best_params`` are the weights from the best validation epoch.
    """

    config: TrainConfig
    dims: dict[str, int]
    epoch: int
    params: dict[str, np.ndarray]
    adam: AdamState
    best_params: dict[str, np.ndarray]
    history: TrainHistory

    @property
    def seed(self) -> int:
        return self.config.seed

    def model(self, best: bool = True) -> GraphDive:
        return GraphDive.from_arrays(
            self.config, self.dims["f_v"], self.dims["f_e"], self.dims["T"],
            self.best_params if best else self.params,
        )


# ---- core loop ----------------------------------------------------------------------


@dataclass
class _Run:
    model: GraphDive
    ds: Dataset
    train_idx: np.ndarray
    valid_batch: GraphBatch | None
    valid_idx: np.ndarray
    weights: ClassWeights | None
    adam: AdamState


def epoch_order(train_idx: np.ndarray, seed: int, epoch: int) -> np.ndarray:
    """Seed- and epoch-determined visiting order (no hidden RNG state to resume)."""
    return np.random.default_rng([seed, epoch]).permutation(train_idx)


def _batches(order: np.ndarray, size: int):
    for start in range(0, len(order), size):
        yield order[start:start + size]


def _step(run: _Run, idx: np.ndarray) -> float | None:
    model, ds = run.model, run.ds
    y = ds.labels.values[idx]
    mask = ds.labels.mask[idx]
    if not mask.any():
        return None
    batch = GraphBatch([ds.graphs[i] for i in idx])
    frozen = None
    if model.cfg.variant == "post":
        # E-step under the parameters current at this batch
        frozen = model.frozen_posterior(batch, y, mask)
    leaves = model.store.leaves()
    loss = model.loss(batch, y, mask, leaves, run.weights, frozen)
    value = float(loss.value)
    if not math.isfinite(value):
        raise TrainingError(f"non-finite loss {value} (batch of {len(idx)} graphs)")
    backward(loss, model.store)
    adam_step(model.store, model.store.grads, run.adam)
    return value


def em_epoch(run: _Run, epoch: int) -> float:
    """One pass over the training split: E-step then M-step per mini-batch."""
    cfg = run.model.cfg
    losses = []
    for idx in _batches(epoch_order(run.train_idx, cfg.seed, epoch), cfg.batch_size):
        value = _step(run, idx)
        if value is not None:
            losses.append(value)
    return float(np.mean(losses)) if losses else float("nan")


def _valid_auc(run: _Run) -> float:
    if run.valid_batch is None:
        return float("nan")
    probs = run.model.predict_proba(run.valid_batch)
    labels = run.ds.labels.values[run.valid_idx]
    mask = run.ds.labels.mask[run.valid_idx]
    aucs = [metrics.roc_auc(probs[mask[:, t], t], labels[mask[:, t], t]) for t in range(labels.shape[1])]
    aucs = [a for a in aucs if not math.isnan(a)]
    return float(np.mean(aucs)) if aucs else float("nan")


def _dims(ds: Dataset) -> dict[str, int]:
    g = ds.graphs[0]
    f_e = next((h.edge_feats.shape[1] for h in ds.graphs if h.num_edges), 0)
    return {"f_v": int(g.node_feats.shape[1]), "f_e": int(f_e), "T": int(ds.T)}


def train(
    cfg: TrainConfig,
    ds: Dataset,
    resume: Checkpoint | None = None,
    on_epoch: Callable[[int, float, float], None] | None = None,
    stop_after: int | None = None,
) -> tuple[Checkpoint, TrainHistory]:
    """Train ``cfg.epochs`` epochs (continuing from ``resume`` if given).

    Returns the checkpoint (last state plus best-validation weights) and the
    history. ``stop_after`` ends the run early after that many total epochs,
    which is how an interrupted run is simulated.
    """
    ds = resolve_split(ds, cfg)
    train_idx = ds.indices("train")
    valid_idx = ds.indices("valid")
    if len(train_idx) == 0:
        raise TrainingError("training split is empty")
    dims = _dims(ds)

    weights = None
    if cfg.variant == "baseline_reweight":
        weights = inverse_frequency_weights(ds.labels.take(train_idx))
        if not weights.ok:
            raise TrainingError("class absent from the training split; cannot re-weight")

    model = GraphDive.init(cfg, dims["f_v"], dims["f_e"], dims["T"])
    if resume is not None:
        if resume.dims != dims:
            raise TrainingError(f"checkpoint dims {resume.dims} do not match dataset {dims}")
        model.store.load_values(resume.params)
        adam = resume.adam.copy()
        history = resume.history.copy()
        best = {k: v.copy() for k, v in resume.best_params.items()}
        start = resume.epoch
    else:
        adam = AdamState.for_store(model.store, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.adam_eps)
        history = TrainHistory()
        best = model.store.copy_values()
        start = 0

    run = _Run(
        model, ds, train_idx,
        GraphBatch([ds.graphs[i] for i in valid_idx]) if len(valid_idx) else None,
        valid_idx, weights, adam,
    )
    end = cfg.epochs if stop_after is None else min(cfg.epochs, stop_after)
    for epoch in range(start, end):
        t0 = time.perf_counter()
        loss = em_epoch(run, epoch)
        auc = _valid_auc(run)
        history.train_loss.append(loss)
        history.valid_auc.append(auc)
        history.wall_clock.append(time.perf_counter() - t0)
        prev = history.best_valid_auc
        if history.best_epoch < 0 or (not math.isnan(auc) and (math.isnan(prev) or auc > prev)):
            history.best_epoch = epoch
            best = model.store.copy_values()
        if on_epoch is not None:
            on_epoch(epoch, loss, auc)
        log.debug("epoch %d loss %.6f valid_auc %.4f", epoch, loss, auc)

    ckpt = Checkpoint(cfg, dims, end, model.store.copy_values(), run.adam, best, history)
    return ckpt, history


# ---- evaluation ---------------------------------------------------------------------


def _minority_classes(ds: Dataset) -> list[int]:
    ref = ds.indices("train") if ds.split is not None and "train" in ds.split else np.arange(len(ds))
    return [metrics.minority_label(ds.labels.values[ref, t], ds.labels.mask[ref, t]) for t in range(ds.T)]


def _split_indices(ds: Dataset, split: str) -> np.ndarray:
    if split == "all" or ds.split is None:
        return np.arange(len(ds))
    return ds.indices(split)


def evaluate(ckpt: Checkpoint, ds: Dataset, split: str = "test", threshold: float = 0.5) -> metrics.EvalReport:
    ds = resolve_split(ds, ckpt.config)
    idx = _split_indices(ds, split)
    if len(idx) == 0:
        raise ValueError(f"split {split!r} is empty")
    model = ckpt.model(best=True)
    probs = model.predict_proba([ds.graphs[i] for i in idx])
    return metrics.evaluate_predictions(
        probs, ds.labels.values[idx], ds.labels.mask[idx], _minority_classes(ds), threshold
    )


def expert_usage(ds: Dataset, ckpt: Checkpoint, split: str = "test") -> metrics.ExpertUsage:
    ds = resolve_split(ds, ckpt.config)
    idx = _split_indices(ds, split)
    gates = ckpt.model(best=True).gate_weights([ds.graphs[i] for i in idx])
    return metrics.expert_usage_from_gates(gates, ds.labels.values[idx], ds.labels.mask[idx])


# ---- sweeps ----------------------------------------------------------------------------


@dataclass
class SweepCell:
    M: int
    lam: float
    valid: list[float]
    test: list[float]

    @property
    def mean_valid(self) -> float:
        return metrics.aggregate(self.valid)[0]

    @property
    def std_valid(self) -> float:
        return metrics.aggregate(self.valid)[1]

    @property
    def mean_test(self) -> float:
        return metrics.aggregate(self.test)[0]


@dataclass
class SweepResult:
    cells: list[SweepCell]

    @property
    def best(self) -> SweepCell:
        def key(c: SweepCell):
            v = c.mean_valid
            return (-(v if not math.isnan(v) else -math.inf), c.M, c.lam)

        return min(self.cells, key=key)

    def curve(self) -> list[tuple[int, float, float, float]]:
        """Per M: (M, best-lambda, mean valid AUC, mean test AUC)."""
        out = []
        for M in sorted({c.M for c in self.cells}):
            cell = SweepResult([c for c in self.cells if c.M == M]).best
            out.append((M, cell.lam, cell.mean_valid, cell.mean_test))
        return out

    def to_tsv(self) -> str:
        rows = ["M\tlambda\tmean_valid_auc\tstd_valid_auc\tmean_test_auc\tseeds"]
        for c in self.cells:
            rows.append(
                f"{c.M}\t{c.lam!r}\t{metrics._fmt(c.mean_valid)}\t{metrics._fmt(c.std_valid)}"
                f"\t{metrics._fmt(c.mean_test)}\t{len(c.valid)}"
            )
        b = self.best
        rows.append(f"# best\tM={b.M}\tlambda={b.lam!r}\tmean_valid_auc={metrics._fmt(b.mean_valid)}")
        return "\n".join(rows) + "\n"

    def curve_tsv(self) -> str:
        rows = ["M\tbest_lambda\tmean_valid_auc\tmean_test_auc"]
        for M, lam, v, t in self.curve():
            rows.append(f"{M}\t{lam!r}\t{metrics._fmt(v)}\t{metrics._fmt(t)}")
        return "\n".join(rows) + "\n"


def _train_cell(args) -> tuple[float, float]:
    cfg, ds = args
    ckpt, hist = train(cfg, ds)
    test = evaluate(ckpt, ds, "test").mean_auc
    return hist.best_valid_auc, test


def sweep(cfg: TrainConfig, ds: Dataset, workers: int = 1) -> SweepResult:
    """Train every (M, lambda) grid cell on the same seed set."""
    if not cfg.grid_m or not cfg.grid_lambda:
        raise ValueError("sweep grids must be nonempty")
    ds = resolve_split(ds, cfg)
    jobs, keys = [], []
    for M in cfg.grid_m:
        for lam in cfg.grid_lambda:
            for seed in cfg.seed_list:
                jobs.append((cfg.replace(M=M, lam=lam, seed=seed), ds))
                keys.append((M, lam))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_train_cell, jobs))
    else:
        results = [_train_cell(j) for j in jobs]
    cells: dict[tuple[int, float], SweepCell] = {}
    for key, (v, t) in zip(keys, results):
        cell = cells.setdefault(key, SweepCell(key[0], key[1], [], []))
        cell.valid.append(v)
        cell.test.append(t)
    return SweepResult(list(cells.values()))
