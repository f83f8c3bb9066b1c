"""Central-difference gradient checking.

The numeric side only ever runs forward passes, in float64, and never touches
the tape.  Perturbations that flip a relu sign or a maxpool argmax anywhere in
the network straddle a kink; those coordinates are reported and excluded.

Autodiff is compared in float64 by default, which isolates the derivative
rules from single-precision rounding.  :func:`precision_gap` covers the
second question, how far float32 autodiff drifts from float64 autodiff.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .autograd import ops
from .autograd.tensor import Tape, Tensor, backward

LossFn = Callable[[dict[str, Tensor]], Tensor]


def _same_pattern(a: list, b: list) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def numeric_gradients(loss_fn: LossFn, values: dict[str, np.ndarray], h: float = 1e-3):
    """Return ``{name: (grad, valid_mask)}`` from float64 central differences."""
    base = {k: np.array(v, dtype=np.float64) for k, v in values.items()}

    def evaluate():
        with ops.record_kinks() as kinks:
            loss = loss_fn({k: Tensor(v, dtype=np.float64) for k, v in base.items()})
        return float(loss.data), kinks

    _, base_kinks = evaluate()
    out = {}
    for name, arr in base.items():
        grad = np.zeros_like(arr)
        valid = np.ones(arr.shape, dtype=bool)
        flat, gflat, vflat = arr.reshape(-1), grad.reshape(-1), valid.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp, kp = evaluate()
            flat[i] = orig - h
            fm, km = evaluate()
            flat[i] = orig
            gflat[i] = (fp - fm) / (2 * h)
            vflat[i] = _same_pattern(kp, base_kinks) and _same_pattern(km, base_kinks)
        out[name] = (grad, valid)
    return out


def autodiff_gradients(loss_fn: LossFn, values: dict[str, np.ndarray],
                       dtype=np.float32) -> dict[str, np.ndarray]:
    tensors = {k: Tensor(np.array(v), requires_grad=True, dtype=dtype) for k, v in values.items()}
    with Tape() as tape:
        loss = loss_fn(tensors)
    backward(loss, tape)
    return {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in tensors.items()}


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    """Elementwise ``|a - b| / max(|a|, |b|, floor)``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


@dataclass
class GradCheckResult:
    max_rel_error: float
    checked: int
    excluded: int
    worst: str

    def passed(self, tol: float) -> bool:
        return self.checked > 0 and self.max_rel_error < tol


def check_gradients(loss_fn: LossFn, values: dict[str, np.ndarray], h: float = 1e-3,
                    floor: float = 1e-8, dtype=np.float64) -> GradCheckResult:
    """Compare autodiff (in ``dtype``) against float64 central differences."""
    auto = autodiff_gradients(loss_fn, values, dtype)
    num = numeric_gradients(loss_fn, values, h)
    worst, worst_name, checked, excluded = 0.0, "", 0, 0
    for name, (g, valid) in num.items():
        err = relative_error(auto[name], g, floor)[valid]
        checked += err.size
        excluded += int((~valid).sum())
        if err.size and err.max() > worst:
            worst, worst_name = float(err.max()), name
    return GradCheckResult(worst, checked, excluded, worst_name)


def precision_gap(loss_fn: LossFn, values: dict[str, np.ndarray]) -> dict[str, float]:
    """Per tensor, ``max|g32 - g64| / max|g64|`` between float32 and float64 autodiff.

    Normalising by the tensor's largest gradient (not elementwise) keeps
    entries that cancel to rounding level from dominating.
    """
    g32 = autodiff_gradients(loss_fn, values, np.float32)
    g64 = autodiff_gradients(loss_fn, values, np.float64)
    out = {}
    for name, ref in g64.items():
        scale = float(np.abs(ref).max())
        diff = float(np.abs(g32[name].astype(np.float64) - ref).max())
        out[name] = diff / scale if scale > 0 else diff
    return out
