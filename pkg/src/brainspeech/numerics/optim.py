"""Adam optimizer with bias correction."""

from __future__ import annotations

from typing import Dict, Sequence

import numpy as np

from .tensor import Tensor


class NonFiniteGradient(RuntimeError):
    """Raised when a parameter's gradient contains NaN or infinity."""

    def __init__(self, name: str):
        super().__init__(f"non-finite gradient for parameter {name!r}")
        self.parameter = name


class AdamState:
    """First/second moment estimates and step counter for a parameter set."""

    def __init__(
        self,
        params: Sequence[Tensor],
        lr: float = 3e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}
        for p in params:
            if p.name is None:
                raise ValueError("Adam requires named parameters")
            self.m[p.name] = np.zeros_like(p.data)
            self.v[p.name] = np.zeros_like(p.data)


def adam_step(params: Sequence[Tensor], state: AdamState) -> None:
    """One bias-corrected Adam update; parameters with no gradient are skipped."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    for p in params:
        if p.grad is None:
            continue
        if not np.all(np.isfinite(p.grad)):
            raise NonFiniteGradient(p.name or "<unnamed>")
        m = state.m[p.name]
        v = state.v[p.name]
        m *= b1
        m += (1.0 - b1) * p.grad
        v *= b2
        v += (1.0 - b2) * (p.grad * p.grad)
        mhat = m / bc1
        vhat = v / bc2
        p.data -= state.lr * mhat / (np.sqrt(vhat) + state.eps)
