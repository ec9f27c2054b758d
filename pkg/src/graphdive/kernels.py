"""Hot kernels for neighbourhood aggregation.

``segment_sum`` scatters rows into buckets (the AGGREGATE step and the
backward of a row gather); ``gather_rows`` is its adjoint. The compiled
Cython versions are used when the extension was built, otherwise the NumPy
versions below. Set ``GRAPHDIVE_KERNELS=python`` to force the fallback.
"""
from __future__ import annotations

import os

import numpy as np

__all__ = ["BACKEND", "segment_sum", "gather_rows", "py_segment_sum", "py_gather_rows"]


def py_segment_sum(values: np.ndarray, index: np.ndarray, n: int) -> np.ndarray:
    values = np.ascontiguousarray(values, dtype=np.float64)
    out = np.zeros((n, values.shape[1]), dtype=np.float64)
    np.add.at(out, index, values)
    return out


def py_gather_rows(values: np.ndarray, index: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(values, dtype=np.float64)[index]


try:
    if os.environ.get("GRAPHDIVE_KERNELS", "").lower() == "python":
        raise ImportError("fallback forced")
    from graphdive import _kernels as _ext
except ImportError:
    _ext = None


if _ext is not None:
    BACKEND = "cython"

    def segment_sum(values: np.ndarray, index: np.ndarray, n: int) -> np.ndarray:
        return _ext.segment_sum(
            np.ascontiguousarray(values, dtype=np.float64),
            np.ascontiguousarray(index, dtype=np.intp),
            int(n),
        )

    def gather_rows(values: np.ndarray, index: np.ndarray) -> np.ndarray:
        return _ext.gather_rows(
            np.ascontiguousarray(values, dtype=np.float64),
            np.ascontiguousarray(index, dtype=np.intp),
        )

else:
    BACKEND = "python"
    segment_sum = py_segment_sum
    gather_rows = py_gather_rows
