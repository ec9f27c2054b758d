"""Named parameter storage and the Adam optimizer."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from graphdive.numerics.autodiff import Tensor


class ParamStore:
    """Ordered name -> float64 matrix mapping with matching gradient slots.

    Arrays are held by reference and updated in place, so objects that
    share them (model parameter views) always see the current values.
    """

    def __init__(self, params: dict[str, np.ndarray] | None = None):
        self._params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._leaves: dict[str, Tensor] = {}
        for name, value in (params or {}).items():
            self.add(name, value)

    def add(self, name: str, value) -> np.ndarray:
        if name in self._params:
            raise KeyError(f"duplicate parameter {name!r}")
        arr = np.asarray(value, dtype=np.float64)
        if not arr.flags.c_contiguous or arr.dtype != np.float64:
            arr = np.ascontiguousarray(arr, dtype=np.float64)
        self._params[name] = arr
        self.grads[name] = np.zeros_like(arr)
        return arr

    def __getitem__(self, name: str) -> np.ndarray:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    @property
    def arrays(self) -> dict[str, np.ndarray]:
        return self._params

    def names(self) -> list[str]:
        return list(self._params)

    @property
    def size(self) -> int:
        return sum(a.size for a in self._params.values())

    def leaves(self) -> dict[str, Tensor]:
        """Fresh differentiable leaves over the current values."""
        self._leaves = {
            name: Tensor(arr, requires_grad=True, name=name)
            for name, arr in self._params.items()
        }
        return self._leaves

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g.fill(0.0)

    def collect(self) -> None:
        """Copy leaf gradients from the last backward pass into ``grads``."""
        self.zero_grad()
        for name, leaf in self._leaves.items():
            if leaf.grad is not None:
                self.grads[name][...] = leaf.grad

    def copy_values(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self._params.items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for name, arr in self._params.items():
            src = values[name]
            if src.shape != arr.shape:
                raise ValueError(f"shape mismatch for {name}: {src.shape} vs {arr.shape}")
            arr[...] = src


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_store(cls, store: ParamStore, **hyper) -> "AdamState":
        st = cls(**hyper)
        for name, arr in store.items():
            st.m[name] = np.zeros_like(arr)
            st.v[name] = np.zeros_like(arr)
        return st

    def copy(self) -> "AdamState":
        return AdamState(
            self.lr, self.beta1, self.beta2, self.eps, self.step,
            {k: v.copy() for k, v in self.m.items()},
            {k: v.copy() for k, v in self.v.items()},
        )


def adam_step(store: ParamStore, grads: dict[str, np.ndarray], state: AdamState) -> None:
    """One bias-corrected Adam update, in place on ``store`` and ``state``."""
    for name, arr in store.items():
        g = grads[name]
        if g.shape != arr.shape or state.m[name].shape != arr.shape:
            raise ValueError(f"shape mismatch for {name}")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for name, arr in store.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        arr -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
