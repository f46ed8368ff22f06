"""Central finite-difference gradient checks in float64."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor


@dataclass
class GradReport:
    name: str
    rel_error: float
    abs_error: float
    checked: int

    def ok(self, rtol: float) -> bool:
        return self.rel_error <= rtol


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """Max-norm relative error ``max|a - n| / max(max|a|, max|n|, floor)``."""
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), floor)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def numeric_grad(loss_fn, tensor: Tensor, h: float = 1e-3, indices=None) -> np.ndarray:
    """Central differences of scalar ``loss_fn()`` w.r.t. entries of ``tensor``."""
    flat = tensor.data.reshape(-1)
    out = np.zeros(flat.shape, dtype=np.float64)
    if indices is None:
        indices = range(flat.size)
    for i in indices:
        orig = flat[i]
        flat[i] = orig + h
        up = float(loss_fn().data)
        flat[i] = orig - h
        down = float(loss_fn().data)
        flat[i] = orig
        out[i] = (up - down) / (2 * h)
    return out.reshape(tensor.shape)


def check_gradients(loss_fn, tensors: dict, h: float = 1e-3, max_entries: int | None = None,
                    rng: np.random.Generator | None = None, floor: float = 1e-8) -> list:
    """Compare backward() against finite differences for each named tensor.

    ``tensors`` must already hold float64 data. ``loss_fn`` rebuilds the
    graph from scratch on each call and returns a scalar tensor. With
    ``max_entries`` only a random subset of coordinates is probed.
    ``floor`` bounds the relative-error denominator from below, so a
    gradient that is zero up to roundoff is judged on an absolute scale.
    """
    for t in tensors.values():
        if t.data.dtype != np.float64:
            raise TypeError("gradient checks require float64 tensors")
        t.grad = None
    loss = loss_fn()
    loss.backward()
    reports = []
    for name, t in tensors.items():
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad.astype(np.float64)
        idx = None
        if max_entries is not None and t.size > max_entries:
            rng = rng or np.random.default_rng(0)
            idx = np.sort(rng.choice(t.size, size=max_entries, replace=False))
        numeric = numeric_grad(loss_fn, t, h, idx)
        if idx is not None:
            a, n = analytic.reshape(-1)[idx], numeric.reshape(-1)[idx]
        else:
            a, n = analytic, numeric
        reports.append(GradReport(name, relative_error(a, n, floor), float(np.abs(a - n).max(initial=0.0)), int(np.size(a))))
    return reports
