"""Differentiable primitives used by the decoding networks.

All functions take and return :class:`Tensor`. Data layout convention is
(batch, channel, time) for 3-axis tensors. Every op here has a matching
finite-difference check in the test suite.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from scipy.special import erf

from .tensor import Tensor, from_op

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"add: shape mismatch {a.shape} vs {b.shape}")
    out_data = a.data + b.data

    def backward(g: np.ndarray) -> None:
        a.accumulate(g)
        b.accumulate(g)

    return from_op(out_data, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"sub: shape mismatch {a.shape} vs {b.shape}")
    out_data = a.data - b.data

    def backward(g: np.ndarray) -> None:
        a.accumulate(g)
        b.accumulate(-g)

    return from_op(out_data, (a, b), backward)


def scale(a: Tensor, c: float) -> Tensor:
    out_data = a.data * c

    def backward(g: np.ndarray) -> None:
        a.accumulate(g * c)

    return from_op(out_data, (a,), backward)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    out_data = a.data.reshape(shape)

    def backward(g: np.ndarray) -> None:
        a.accumulate(g.reshape(a.shape))

    return from_op(out_data, (a,), backward)


def mean_all(a: Tensor) -> Tensor:
    n = a.size
    out_data = np.asarray(a.data.mean())

    def backward(g: np.ndarray) -> None:
        a.accumulate(np.full_like(a.data, g / n))

    return from_op(out_data, (a,), backward)


def conv1d(x: Tensor, w: Tensor, b: Optional[Tensor] = None, dilation: int = 1) -> Tensor:
    """Same-padded dilated 1D convolution.

    ``x`` is (B, Cin, T), ``w`` is (Cout, Cin, k) with k odd, ``b`` is
    (Cout,). Output time length equals input time length; padding is
    ``dilation * (k - 1) / 2`` zeros on each side.
    """
    if x.ndim != 3 or w.ndim != 3:
        raise ValueError("conv1d expects x (B,Cin,T) and w (Cout,Cin,k)")
    batch, cin, t = x.shape
    cout, cin_w, k = w.shape
    if cin_w != cin:
        raise ValueError(f"conv1d: input has {cin} channels, weight expects {cin_w}")
    if k % 2 == 0:
        raise ValueError("conv1d: kernel size must be odd")
    if dilation < 1:
        raise ValueError("conv1d: dilation must be >= 1")
    if b is not None and b.shape != (cout,):
        raise ValueError(f"conv1d: bias shape {b.shape} != ({cout},)")

    pad = dilation * (k - 1) // 2
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad))) if pad else x.data
    cols4 = np.empty((batch, cin, k, t), dtype=x.dtype)
    for j in range(k):
        cols4[:, :, j, :] = xp[:, :, j * dilation : j * dilation + t]
    cols = cols4.reshape(batch, cin * k, t)
    w2 = w.data.reshape(cout, cin * k)
    out_data = np.matmul(w2, cols)
    if b is not None:
        out_data += b.data[:, None]

    def backward(g: np.ndarray) -> None:
        if w.requires_grad:
            dw2 = np.tensordot(g, cols, axes=([0, 2], [0, 2]))
            w.accumulate(dw2.reshape(cout, cin, k))
        if b is not None and b.requires_grad:
            b.accumulate(g.sum(axis=(0, 2)))
        if x.requires_grad:
            dcols = np.matmul(w2.T, g).reshape(batch, cin, k, t)
            dxp = np.zeros_like(xp)
            for j in range(k):
                dxp[:, :, j * dilation : j * dilation + t] += dcols[:, :, j, :]
            x.accumulate(dxp[:, :, pad : pad + t] if pad else dxp)

    parents = (x, w, b) if b is not None else (x, w)
    return from_op(out_data, parents, backward)


class BatchNormState:
    """Running statistics for one batch-norm layer."""

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5,
                 dtype=np.float32):
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.momentum = momentum
        self.eps = eps
        self.initialized = False


def batchnorm1d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    state: BatchNormState,
    training: bool,
    update_running: bool = True,
) -> Tensor:
    """Per-channel normalization over the (batch, time) axes.

    Train mode normalizes by batch statistics and (optionally) updates the
    running estimates; eval mode uses the frozen running statistics and
    fails if none were ever recorded.
    """
    if x.ndim != 3:
        raise ValueError("batchnorm1d expects (B, C, T)")
    batch, channels, t = x.shape
    if gamma.shape != (channels,) or beta.shape != (channels,):
        raise ValueError("batchnorm1d: gamma/beta must be (C,)")

    if training:
        if batch < 2:
            raise ValueError("batchnorm1d: train mode requires batch size >= 2")
        n = batch * t
        mu = x.data.mean(axis=(0, 2))
        var = x.data.var(axis=(0, 2))
        inv = 1.0 / np.sqrt(var + state.eps)
        xhat = (x.data - mu[:, None]) * inv[:, None]
        out_data = gamma.data[:, None] * xhat + beta.data[:, None]
        if update_running:
            m = state.momentum
            unbiased = var * n / max(n - 1, 1)
            state.running_mean = (1 - m) * state.running_mean + m * mu.astype(
                state.running_mean.dtype
            )
            state.running_var = (1 - m) * state.running_var + m * unbiased.astype(
                state.running_var.dtype
            )
            state.initialized = True

        def backward(g: np.ndarray) -> None:
            if gamma.requires_grad:
                gamma.accumulate((g * xhat).sum(axis=(0, 2)))
            if beta.requires_grad:
                beta.accumulate(g.sum(axis=(0, 2)))
            if x.requires_grad:
                dxhat = g * gamma.data[:, None]
                s1 = dxhat.sum(axis=(0, 2), keepdims=True)
                s2 = (dxhat * xhat).sum(axis=(0, 2), keepdims=True)
                dx = (inv[:, None] / n) * (n * dxhat - s1 - xhat * s2)
                x.accumulate(dx)

        return from_op(out_data, (x, gamma, beta), backward)

    if not state.initialized:
        raise RuntimeError("batchnorm1d: eval mode before any train step")
    rinv = 1.0 / np.sqrt(state.running_var + state.eps)
    scale_c = (gamma.data * rinv)[:, None]
    xhat = (x.data - state.running_mean[:, None]) * rinv[:, None]
    out_data = gamma.data[:, None] * xhat + beta.data[:, None]

    def backward_eval(g: np.ndarray) -> None:
        if gamma.requires_grad:
            gamma.accumulate((g * xhat).sum(axis=(0, 2)))
        if beta.requires_grad:
            beta.accumulate(g.sum(axis=(0, 2)))
        if x.requires_grad:
            x.accumulate(g * scale_c)

    return from_op(out_data, (x, gamma, beta), backward_eval)


def gelu(x: Tensor) -> Tensor:
    """Exact-erf GELU."""
    cdf = 0.5 * (1.0 + erf(x.data * _INV_SQRT2))
    out_data = x.data * cdf

    def backward(g: np.ndarray) -> None:
        pdf = np.exp(-0.5 * x.data * x.data) * _INV_SQRT2PI
        x.accumulate(g * (cdf + x.data * pdf))

    return from_op(out_data, (x,), backward)


def relu(x: Tensor) -> Tensor:
    out_data = np.maximum(x.data, 0)

    def backward(g: np.ndarray) -> None:
        x.accumulate(g * (x.data > 0))

    return from_op(out_data, (x,), backward)


def glu(x: Tensor) -> Tensor:
    """Gated linear unit over the channel axis; halves the channel count."""
    channels = x.shape[1]
    if channels % 2:
        raise ValueError("glu requires an even channel count")
    half = channels // 2
    a = x.data[:, :half]
    gate = x.data[:, half:]
    sig = 1.0 / (1.0 + np.exp(-gate))
    out_data = a * sig

    def backward(g: np.ndarray) -> None:
        dx = np.empty_like(x.data)
        dx[:, :half] = g * sig
        dx[:, half:] = g * a * sig * (1.0 - sig)
        x.accumulate(dx)

    return from_op(out_data, (x,), backward)


def softmax(x: Tensor, axis: int = -1, keep: Optional[np.ndarray] = None) -> Tensor:
    """Softmax along ``axis``; entries where ``keep`` is False are excluded."""
    z = x.data
    if keep is not None:
        if np.all(~keep):
            raise ValueError("softmax: all entries masked out")
        z = np.where(keep, z, -np.inf)
    m = z.max(axis=axis, keepdims=True)
    if not np.all(np.isfinite(m)):
        raise ValueError("softmax: a slice has every entry masked out")
    e = np.exp(z - m)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g: np.ndarray) -> None:
        inner = (g * y).sum(axis=axis, keepdims=True)
        x.accumulate((g - inner) * y)

    return from_op(y, (x,), backward)


def logsumexp(x: Tensor, axis: int) -> Tensor:
    m = x.data.max(axis=axis, keepdims=True)
    e = np.exp(x.data - m)
    s = e.sum(axis=axis, keepdims=True)
    out_data = np.squeeze(m + np.log(s), axis=axis)

    def backward(g: np.ndarray) -> None:
        x.accumulate(np.expand_dims(g, axis) * (e / s))

    return from_op(out_data, (x,), backward)


def diagonal(x: Tensor) -> Tensor:
    n, m = x.shape
    if n != m:
        raise ValueError("diagonal expects a square matrix")
    out_data = np.diagonal(x.data).copy()

    def backward(g: np.ndarray) -> None:
        dx = np.zeros_like(x.data)
        np.fill_diagonal(dx, g)
        x.accumulate(dx)

    return from_op(out_data, (x,), backward)


def matmul2d(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul2d: incompatible shapes {a.shape} @ {b.shape}")
    out_data = a.data @ b.data

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate(g @ b.data.T)
        if b.requires_grad:
            b.accumulate(a.data.T @ g)

    return from_op(out_data, (a, b), backward)


def mix(w: Tensor, x: Tensor) -> Tensor:
    """Channel mixing: (J, C) weights applied to (B, C, T) -> (B, J, T)."""
    if w.ndim != 2 or x.ndim != 3 or w.shape[1] != x.shape[1]:
        raise ValueError(f"mix: incompatible shapes {w.shape} with {x.shape}")
    out_data = np.matmul(w.data, x.data)

    def backward(g: np.ndarray) -> None:
        if w.requires_grad:
            w.accumulate(np.tensordot(g, x.data, axes=([0, 2], [0, 2])))
        if x.requires_grad:
            x.accumulate(np.matmul(w.data.T, g))

    return from_op(out_data, (w, x), backward)


def subject_mix(m: Tensor, x: Tensor, subject_idx: np.ndarray) -> Tensor:
    """Apply the per-sample matrix ``m[subject_idx[b]]`` along channels.

    ``m`` is (S, D, D), ``x`` is (B, D, T); gradients for a subject's
    matrix accumulate over exactly the batch rows of that subject.
    """
    if m.ndim != 3 or m.shape[1] != m.shape[2]:
        raise ValueError("subject_mix: m must be (S, D, D)")
    if x.ndim != 3 or x.shape[1] != m.shape[1]:
        raise ValueError(f"subject_mix: x {x.shape} incompatible with m {m.shape}")
    subject_idx = np.asarray(subject_idx)
    if subject_idx.shape != (x.shape[0],):
        raise ValueError("subject_mix: one subject index per batch row required")
    if subject_idx.min() < 0 or subject_idx.max() >= m.shape[0]:
        raise IndexError("subject_mix: subject index out of range")
    out_data = np.matmul(m.data[subject_idx], x.data)

    def backward(g: np.ndarray) -> None:
        if m.requires_grad:
            dm = np.zeros_like(m.data)
            per_sample = np.matmul(g, x.data.transpose(0, 2, 1))
            np.add.at(dm, subject_idx, per_sample)
            m.accumulate(dm)
        if x.requires_grad:
            x.accumulate(np.matmul(m.data[subject_idx].transpose(0, 2, 1), g))

    return from_op(out_data, (m, x), backward)


def pairwise_inner(z: Tensor, y: Tensor) -> Tensor:
    """Full inner products between all pairs: (B,F,T) x (N,F,T) -> (B,N)."""
    if z.shape[1:] != y.shape[1:]:
        raise ValueError(f"pairwise_inner: shape mismatch {z.shape} vs {y.shape}")
    zf = z.data.reshape(z.shape[0], -1)
    yf = y.data.reshape(y.shape[0], -1)
    out_data = zf @ yf.T

    def backward(g: np.ndarray) -> None:
        if z.requires_grad:
            z.accumulate((g @ yf).reshape(z.shape))
        if y.requires_grad:
            y.accumulate((g.T @ zf).reshape(y.shape))

    return from_op(out_data, (z, y), backward)


def inner_product_full(z: Tensor, y: Tensor) -> Tensor:
    """Sum of elementwise products over every axis of two same-shape tensors."""
    if z.shape != y.shape:
        raise ValueError(f"inner_product_full: shape mismatch {z.shape} vs {y.shape}")
    out_data = np.asarray((z.data * y.data).sum())

    def backward(g: np.ndarray) -> None:
        z.accumulate(g * y.data)
        y.accumulate(g * z.data)

    return from_op(out_data, (z, y), backward)


def mse(a: Tensor, b: Tensor) -> Tensor:
    """Mean squared error over all elements."""
    if a.shape != b.shape:
        raise ValueError(f"mse: shape mismatch {a.shape} vs {b.shape}")
    diff = a.data - b.data
    out_data = np.asarray((diff * diff).mean())

    def backward(g: np.ndarray) -> None:
        d = g * 2.0 * diff / diff.size
        a.accumulate(d)
        b.accumulate(-d)

    return from_op(out_data, (a, b), backward)
