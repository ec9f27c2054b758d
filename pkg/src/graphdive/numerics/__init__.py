"""Dense float64 numerics: reverse-mode tape, parameters, Adam, gradient checks."""
import numpy as np

from graphdive.numerics.autodiff import Tensor, backward, constant, sigmoid_value
from graphdive.numerics.gradcheck import grad_check, numeric_grad, relative_error
from graphdive.numerics.params import AdamState, ParamStore, adam_step


def stable_softmax(logits, tau: float = 1.0) -> np.ndarray:
    """``softmax(logits / tau)`` along the last axis, max-shifted."""
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError("logits must be finite")
    z = z / tau
    e = np.exp(z - np.max(z, axis=-1, keepdims=True))
    return e / np.sum(e, axis=-1, keepdims=True)


def sigmoid(x):
    """Logistic function; stays strictly positive for very negative input."""
    out = sigmoid_value(x)
    return float(out) if out.ndim == 0 else out


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape or (fan_in, fan_out))


__all__ = [
    "AdamState", "ParamStore", "Tensor", "adam_step", "backward", "constant",
    "glorot", "grad_check", "numeric_grad", "relative_error", "sigmoid",
    "stable_softmax",
]
