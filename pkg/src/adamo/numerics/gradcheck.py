"""Finite-difference verification of tape gradients."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from adamo.numerics.autodiff import GradTape, Tensor


@dataclass
class GradCheckReport:
    max_rel_error: float
    tol: float
    per_tensor: list[float] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.max_rel_error < self.tol)


def _rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float) -> float:
    diff = np.max(np.abs(analytic - numeric), initial=0.0)
    scale = max(np.max(np.abs(analytic), initial=0.0), np.max(np.abs(numeric), initial=0.0), floor)
    return float(diff / scale)


def grad_check(f: Callable[..., Tensor], point: Tensor | Sequence[Tensor], tol: float = 1e-5,
               h: float = 1e-4, floor: float = 1e-6) -> GradCheckReport:
    """Compare tape gradients of scalar ``f(*point)`` against central differences.

    The error for one tensor is ``max|analytic - numeric| / max(|analytic|, |numeric|)``,
    with the maxima taken over the tensor's elements; the report carries the
    worst tensor. The denominator never drops below ``floor``, so a tensor
    whose true gradient vanishes is judged by absolute error. Point tensors
    are perturbed in place and restored. Use float64 tensors: float32
    differences are too noisy at ``h = 1e-4``.
    """
    points = [point] if isinstance(point, Tensor) else list(point)
    saved = [p.grad for p in points]
    for p in points:
        p.grad = None
    with GradTape() as tape:
        loss = f(*points)
    tape.backward(loss, leaves=points)
    analytic = [p.grad.copy() for p in points]
    for p, g in zip(points, saved):
        p.grad = g

    errors = []
    for p, a in zip(points, analytic):
        numeric = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        nflat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = f(*points).item()
            flat[i] = orig - h
            down = f(*points).item()
            flat[i] = orig
            nflat[i] = (up - down) / (2 * h)
        errors.append(_rel_error(a, numeric, floor))
    return GradCheckReport(max(errors, default=0.0), tol, errors)
