"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .autograd import Tensor


@dataclass
class GradCheckReport:
    max_rel_error: dict[str, float] = field(default_factory=dict)
    tol: float = 1e-4

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.worst < self.tol


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    """|a - n| / max(|a|, |n|, floor), elementwise."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def numerical_gradient(f: Callable[[], Tensor], x: Tensor, step: float = 1e-5) -> np.ndarray:
    grad = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = f().item()
        flat[i] = orig - step
        fm = f().item()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * step)
    return grad


def grad_check(
    f: Callable[[], Tensor],
    inputs: Sequence[Tensor] | dict[str, Tensor],
    tol: float = 1e-4,
    step: float = 1e-5,
    floor: float = 1e-8,
) -> GradCheckReport:
    """Compare backward() against central differences for every input.

    ``f`` is a closure recomputing a scalar from the current input values;
    inputs are perturbed in place. Returns the max relative error per input.
    """
    named = inputs if isinstance(inputs, dict) else {f"x{i}": t for i, t in enumerate(inputs)}
    for t in named.values():
        t.requires_grad = True
        t.grad = None
    f().backward()
    report = GradCheckReport(tol=tol)
    for name, t in named.items():
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = numerical_gradient(f, t, step)
        err = relative_error(analytic, numeric, floor)
        report.max_rel_error[name] = float(err.max()) if err.size else 0.0
    return report
