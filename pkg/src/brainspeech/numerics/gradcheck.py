"""Central finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def grad_check(
    fn: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    h: float = 1e-5,
) -> float:
    """Compare analytic gradients of ``fn(*inputs)`` against central differences.

    ``fn`` must build a fresh graph on every call and return a scalar.
    Inputs should be float64; every element of every input is perturbed, so
    keep instances small. Returns the maximum relative error.
    """
    for t in inputs:
        if t.dtype != np.float64:
            raise ValueError("grad_check requires float64 inputs")
        t.requires_grad = True
        t.zero_grad()

    out = fn(*inputs)
    if out.size != 1:
        raise ValueError("grad_check target must be scalar")
    out.backward()
    analytic = [
        t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in inputs
    ]

    max_rel = 0.0
    for t, ga in zip(inputs, analytic):
        flat = t.data.reshape(-1)
        ga_flat = ga.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = fn(*inputs).item()
            flat[i] = orig - h
            f_minus = fn(*inputs).item()
            flat[i] = orig
            g_fd = (f_plus - f_minus) / (2.0 * h)
            # floor keeps near-zero gradients from amplifying FD noise
            denom = max(abs(ga_flat[i]), abs(g_fd), 1e-4)
            rel = abs(ga_flat[i] - g_fd) / denom
            if rel > max_rel:
                max_rel = rel
    return max_rel
