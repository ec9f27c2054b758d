"""ROC-AUC, per-class accuracy and expert-usage analysis."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from graphdive.baselines import bce


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC with half credit for ties; NaN if a class is absent.

    Uses average ranks, ``(R_pos - P(P+1)/2) / (P N)``, so it runs in
    O(n log n) and matches pairwise counting exactly.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel().astype(bool)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = rankdata(s, method="average")
    u = float(np.sum(ranks[y])) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def roc_auc_bruteforce(scores, labels) -> float:
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel().astype(bool)
    pos, neg = s[y], s[~y]
    if pos.size == 0 or neg.size == 0:
        return float("nan")
    diff = pos[:, None] - neg[None, :]
    wins = np.count_nonzero(diff > 0) + 0.5 * np.count_nonzero(diff == 0)
    return wins / (pos.size * neg.size)


def class_accuracy(preds, labels, minority: int) -> tuple[float, float]:
    """Accuracy on the majority and on the minority class.

    ``minority`` is the rarer label on the training split. An absent class
    yields NaN for its entry.
    """
    p = np.asarray(preds).ravel().astype(int)
    y = np.asarray(labels).ravel().astype(int)
    out = []
    for c in (1 - minority, minority):
        sel = y == c
        out.append(float(np.mean(p[sel] == c)) if sel.any() else float("nan"))
    return out[0], out[1]


def minority_label(train_labels, train_mask=None) -> int:
    y = np.asarray(train_labels).ravel()
    if train_mask is not None:
        y = y[np.asarray(train_mask).ravel().astype(bool)]
    pos = int(np.sum(y == 1))
    return 1 if pos <= y.size - pos else 0


@dataclass
class TaskReport:
    task: int
    n: int
    auc: float
    accuracy: float
    majority_acc: float
    minority_acc: float
    cross_entropy: float
    minority_class: int


@dataclass
class EvalReport:
    tasks: list[TaskReport] = field(default_factory=list)

    @property
    def mean_auc(self) -> float:
        vals = [t.auc for t in self.tasks if not math.isnan(t.auc)]
        return float(np.mean(vals)) if vals else float("nan")

    def mean_of(self, attr: str) -> float:
        vals = [getattr(t, attr) for t in self.tasks if not math.isnan(getattr(t, attr))]
        return float(np.mean(vals)) if vals else float("nan")

    COLUMNS = ("task", "n", "roc_auc", "accuracy", "majority_acc", "minority_acc", "cross_entropy", "minority_class")

    def to_tsv(self) -> str:
        rows = ["\t".join(self.COLUMNS)]
        for t in self.tasks:
            rows.append("\t".join(str(v) for v in (
                t.task, t.n, _fmt(t.auc), _fmt(t.accuracy), _fmt(t.majority_acc),
                _fmt(t.minority_acc), _fmt(t.cross_entropy), t.minority_class,
            )))
        rows.append("\t".join((
            "mean", str(sum(t.n for t in self.tasks)), _fmt(self.mean_auc),
            _fmt(self.mean_of("accuracy")), _fmt(self.mean_of("majority_acc")),
            _fmt(self.mean_of("minority_acc")), _fmt(self.mean_of("cross_entropy")), "",
        )))
        return "\n".join(rows) + "\n"


def _fmt(v: float) -> str:
    return "nan" if math.isnan(v) else repr(float(v))


def evaluate_predictions(
    probs: np.ndarray,
    labels: np.ndarray,
    mask: np.ndarray,
    minority: list[int],
    threshold: float = 0.5,
) -> EvalReport:
    probs = np.asarray(probs, dtype=np.float64).reshape(labels.shape)
    report = EvalReport()
    for t in range(labels.shape[1]):
        m = np.asarray(mask[:, t], dtype=bool)
        p, y = probs[m, t], labels[m, t]
        pred = (p >= threshold).astype(int)
        maj, mino = class_accuracy(pred, y, minority[t])
        report.tasks.append(TaskReport(
            task=t,
            n=int(m.sum()),
            auc=roc_auc(p, y),
            accuracy=float(np.mean(pred == y)) if y.size else float("nan"),
            majority_acc=maj,
            minority_acc=mino,
            cross_entropy=float(np.mean(bce(p, y))) if y.size else float("nan"),
            minority_class=minority[t],
        ))
    return report


def aggregate(values) -> tuple[float, float]:
    """Mean and (population) standard deviation, ignoring NaNs."""
    arr = np.asarray([v for v in values if not math.isnan(v)], dtype=np.float64)
    if arr.size == 0:
        return float("nan"), float("nan")
    return float(arr.mean()), float(arr.std())


@dataclass
class ExpertUsage:
    """Mean gate weight per (task, class, expert).

    ``weights[t][c]`` is a length-``M`` vector, NaN when class ``c`` has no
    samples for task ``t``. ``dominant[t][z]`` is the class whose samples
    put the most weight on expert ``z``.
    """

    weights: list[list[np.ndarray]]
    counts: list[list[int]]

    @property
    def M(self) -> int:
        return len(self.weights[0][0])

    def dominant(self, task: int = 0) -> list[int]:
        w = np.vstack(self.weights[task])
        w = np.where(np.isnan(w), -np.inf, w)
        return [int(np.argmax(w[:, z])) for z in range(w.shape[1])]

    def top_expert(self, task: int, cls: int) -> int:
        return int(np.argmax(self.weights[task][cls]))

    def specialized(self, task: int = 0) -> bool:
        """Whether the two classes lean on different experts the most."""
        if any(np.isnan(w).any() for w in self.weights[task]):
            return False
        return self.top_expert(task, 0) != self.top_expert(task, 1)

    def to_tsv(self) -> str:
        rows = ["task\tclass\tcount\texpert\tweight\texpert_dominant_class"]
        for t, per_class in enumerate(self.weights):
            dom = self.dominant(t)
            for c, w in enumerate(per_class):
                for z, val in enumerate(w):
                    rows.append(f"{t}\t{c}\t{self.counts[t][c]}\t{z}\t{_fmt(val)}\t{dom[z]}")
        return "\n".join(rows) + "\n"


def expert_usage_from_gates(gates: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> ExpertUsage:
    """``gates`` is ``(B, G, M)``; a shared gate (G=1) is reused for every task."""
    B, G, M = gates.shape
    T = labels.shape[1]
    weights, counts = [], []
    for t in range(T):
        g = gates[:, t if G > 1 else 0, :]
        per_class, per_count = [], []
        for c in (0, 1):
            sel = np.asarray(mask[:, t], dtype=bool) & (labels[:, t] == c)
            per_count.append(int(sel.sum()))
            per_class.append(g[sel].mean(axis=0) if sel.any() else np.full(M, np.nan))
        weights.append(per_class)
        counts.append(per_count)
    return ExpertUsage(weights, counts)
