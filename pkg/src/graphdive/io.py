"""Dataset and checkpoint files.

Dataset files are JSON lines: a header ``{"format_version", "T", "f_v",
"f_e"}`` followed by one record per graph::

    {"num_nodes": 3, "edges": [[0, 1], [1, 0]], "node_feats": [[...], ...],
     "edge_feats": [[...], [...]], "labels": [1, null], "split": "train"}

``null`` labels are missing; ``split`` is optional but must then be present
on every record. Floats are written with ``repr`` so they round-trip exactly.

Checkpoints are a magic line, a JSON header line, the raw little-endian
float64 arrays listed in the header, and a trailing SHA-256 of everything
before it.
"""
from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from graphdive.config import TrainConfig
from graphdive.graph import Dataset, Graph, LabelSet, validate_graph
from graphdive.numerics import AdamState
from graphdive.training import Checkpoint, TrainHistory

DATASET_VERSION = 1
CHECKPOINT_VERSION = 1
CHECKPOINT_MAGIC = b"GRAPHDIVE-CKPT\n"


class FormatError(ValueError):
    pass


class CorruptFileError(FormatError):
    pass


def atomic_write(path: str | Path, data: bytes | str) -> None:
    """Write via a temp file in the same directory and rename over ``path``."""
    path = Path(path)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


# ---- datasets ---------------------------------------------------------------------------


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def dataset_to_text(ds: Dataset) -> str:
    f_v = ds.graphs[0].node_feats.shape[1] if len(ds) else 0
    f_e = next((g.edge_feats.shape[1] for g in ds.graphs if g.num_edges), 0)
    lines = [_dumps({"format_version": DATASET_VERSION, "T": ds.T, "f_v": f_v, "f_e": f_e})]
    for i, g in enumerate(ds.graphs):
        labels = [
            int(v) if m else None for v, m in zip(ds.labels.values[i], ds.labels.mask[i])
        ]
        rec = {
            "num_nodes": g.num_nodes,
            "edges": g.edges.tolist(),
            "node_feats": g.node_feats.tolist(),
            "edge_feats": g.edge_feats.tolist(),
            "labels": labels,
        }
        if ds.split is not None:
            rec["split"] = ds.split[i]
        lines.append(_dumps(rec))
    return "\n".join(lines) + "\n"


def save_dataset(ds: Dataset, path: str | Path) -> None:
    atomic_write(path, dataset_to_text(ds))


def load_dataset(path: str | Path) -> Dataset:
    """Parse and validate a dataset file; errors name the offending line."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    lines = text.splitlines()
    if not lines:
        raise FormatError(f"{path}: empty file, header expected on line 1")
    try:
        header = json.loads(lines[0])
        T, f_v, f_e = int(header["T"]), int(header["f_v"]), int(header["f_e"])
        version = int(header["format_version"])
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}:1: bad header ({exc})") from exc
    if version != DATASET_VERSION:
        raise FormatError(f"{path}:1: unsupported format_version {version}")

    graphs, values, mask, split = [], [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            n = int(rec["num_nodes"])
            edges = np.asarray(rec["edges"], dtype=np.intp).reshape(-1, 2)
            node_feats = np.asarray(rec["node_feats"], dtype=np.float64).reshape(n, f_v)
            edge_feats = np.asarray(rec["edge_feats"], dtype=np.float64).reshape(len(edges), f_e)
            labels = rec["labels"]
            if len(labels) != T:
                raise ValueError(f"expected {T} labels, got {len(labels)}")
            if any(v not in (0, 1, None) for v in labels):
                raise ValueError("labels must be 0, 1 or null")
        except (ValueError, KeyError, TypeError) as exc:
            raise FormatError(f"{path}:{lineno}: malformed record ({exc})") from exc
        g = Graph(n, edges, node_feats, edge_feats)
        report = validate_graph(g)
        if not report.ok:
            raise FormatError(f"{path}:{lineno}: invalid graph: {'; '.join(report.violations)}")
        graphs.append(g)
        values.append([0.0 if v is None else float(v) for v in labels])
        mask.append([v is not None for v in labels])
        split.append(rec.get("split"))

    if not graphs:
        raise FormatError(f"{path}: no graph records")
    has_split = [s is not None for s in split]
    if any(has_split) and not all(has_split):
        first = has_split.index(False) + 2
        raise FormatError(f"{path}:{first}: split tag missing (other records have one)")
    labelset = LabelSet(np.array(values).reshape(-1, T), np.array(mask).reshape(-1, T))
    try:
        return Dataset(graphs, labelset, tuple(split) if all(has_split) else None)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


# ---- checkpoints --------------------------------------------------------------------------


def _config_to_json(cfg: TrainConfig) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in cfg.to_dict().items()}


def checkpoint_bytes(ckpt: Checkpoint) -> bytes:
    arrays: list[tuple[str, np.ndarray]] = []
    arrays += [(f"params/{k}", v) for k, v in ckpt.params.items()]
    arrays += [(f"best/{k}", v) for k, v in ckpt.best_params.items()]
    arrays += [(f"adam_m/{k}", v) for k, v in ckpt.adam.m.items()]
    arrays += [(f"adam_v/{k}", v) for k, v in ckpt.adam.v.items()]
    header = {
        "format_version": CHECKPOINT_VERSION,
        "config": _config_to_json(ckpt.config),
        "seed": ckpt.seed,
        "epoch": ckpt.epoch,
        "dims": ckpt.dims,
        "history": ckpt.history.to_dict(),
        "adam": {
            "lr": ckpt.adam.lr, "beta1": ckpt.adam.beta1, "beta2": ckpt.adam.beta2,
            "eps": ckpt.adam.eps, "step": ckpt.adam.step,
        },
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in arrays],
    }
    body = CHECKPOINT_MAGIC + json.dumps(header, separators=(",", ":")).encode() + b"\n"
    body += b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for _, a in arrays)
    return body + hashlib.sha256(body).digest()


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    atomic_write(path, checkpoint_bytes(ckpt))


def checkpoint_from_bytes(data: bytes) -> Checkpoint:
    if len(data) < len(CHECKPOINT_MAGIC) + 32 or not data.startswith(CHECKPOINT_MAGIC):
        raise FormatError("not a graphdive checkpoint")
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CorruptFileError("checkpoint checksum mismatch")
    nl = body.index(b"\n", len(CHECKPOINT_MAGIC))
    header = json.loads(body[len(CHECKPOINT_MAGIC):nl])
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {header.get('format_version')}")
    offset = nl + 1
    groups: dict[str, dict[str, np.ndarray]] = {"params": {}, "best": {}, "adam_m": {}, "adam_v": {}}
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        nbytes = 8 * int(np.prod(shape, dtype=np.int64))
        chunk = body[offset:offset + nbytes]
        if len(chunk) != nbytes:
            raise CorruptFileError("checkpoint truncated")
        group, name = spec["name"].split("/", 1)
        groups[group][name] = np.frombuffer(chunk, dtype="<f8").astype(np.float64).reshape(shape)
        offset += nbytes
    if offset != len(body):
        raise CorruptFileError("trailing bytes in checkpoint")
    a = header["adam"]
    adam = AdamState(a["lr"], a["beta1"], a["beta2"], a["eps"], a["step"], groups["adam_m"], groups["adam_v"])
    return Checkpoint(
        config=TrainConfig.from_dict(header["config"]),
        dims={k: int(v) for k, v in header["dims"].items()},
        epoch=int(header["epoch"]),
        params=groups["params"],
        adam=adam,
        best_params=groups["best"],
        history=TrainHistory.from_dict(header["history"]),
    )


def load_checkpoint(path: str | Path) -> Checkpoint:
    return checkpoint_from_bytes(Path(path).read_bytes())
