"""Central finite-difference validation of tape gradients."""
from __future__ import annotations

from typing import Callable

import numpy as np

from graphdive.numerics.autodiff import Tensor, backward
from graphdive.numerics.params import ParamStore


def relative_error(a, b, floor: float = 1e-8) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def numeric_grad(
    loss_fn: Callable[[dict[str, Tensor]], Tensor], store: ParamStore, h: float = 1e-5
) -> dict[str, np.ndarray]:
    out = {}
    for name, arr in store.items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(loss_fn(store.leaves()).value)
            flat[i] = orig - h
            fm = float(loss_fn(store.leaves()).value)
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * h)
        out[name] = g
    return out


def grad_check(
    loss_fn: Callable[[dict[str, Tensor]], Tensor],
    store: ParamStore,
    h: float = 1e-5,
    analytic: dict[str, np.ndarray] | None = None,
) -> float:
    """Worst relative error between ``backward`` and central differences.

    ``loss_fn`` maps the store's leaves to a scalar tensor. Anything it
    treats as a frozen constant (e.g. E-step posteriors) must be computed
    once, outside ``loss_fn``, at the base point. ``analytic`` overrides the
    tape gradients, which lets callers inject faults.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    if analytic is None:
        backward(loss_fn(store.leaves()), store)
        analytic = {k: v.copy() for k, v in store.grads.items()}
    numeric = numeric_grad(loss_fn, store, h)
    worst = 0.0
    for name in store:
        if analytic[name].size:
            worst = max(worst, float(np.max(relative_error(analytic[name], numeric[name]))))
    return worst
