"""Differentiable operations on :class:`Tensor`.

Elementwise binary ops accept two tensors of identical shape, a tensor and a
Python scalar, a tensor and a constant ndarray of the same shape, or a tensor
and a single-element tensor (scalar broadcast). Nothing else broadcasts.
"""
from __future__ import annotations

import builtins

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import Tensor, make_result

__all__ = [
    "add", "sub", "mul", "neg", "matmul", "sum", "mean", "abs", "square",
    "reshape", "expand", "transpose", "concat", "getitem", "conv2d", "group_norm",
    "relu", "tanh", "sigmoid", "softmax_lastdim", "avg_pool2d",
    "bilinear_sample", "resize_bilinear", "upsample_matrix",
]


def _check_same(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape and a.size != 1 and b.size != 1:
        raise ValueError(f"{op}: shapes {a.shape} and {b.shape} differ (no broadcasting)")


def _reduce_to(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    return np.asarray(g.sum(), dtype=g.dtype).reshape(shape)


def add(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        bv = np.asarray(b, dtype=a.dtype)
        if bv.ndim and bv.shape != a.shape:
            raise ValueError(f"add: constant of shape {bv.shape} does not match {a.shape}")
        return make_result(a.data + bv, (a,), lambda g: (g,), "add_const")
    _check_same(a, b, "add")
    out = a.data + b.data
    sa, sb = a.shape, b.shape
    return make_result(out, (a, b), lambda g: (_reduce_to(g, sa), _reduce_to(g, sb)), "add")


def sub(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        return add(a, -np.asarray(b, dtype=a.dtype))
    _check_same(a, b, "sub")
    sa, sb = a.shape, b.shape
    return make_result(a.data - b.data, (a, b), lambda g: (_reduce_to(g, sa), _reduce_to(-g, sb)), "sub")


def neg(a: Tensor) -> Tensor:
    return make_result(-a.data, (a,), lambda g: (-g,), "neg")


def mul(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        bv = np.asarray(b, dtype=a.dtype)
        if bv.ndim and bv.shape != a.shape:
            raise ValueError(f"mul: constant of shape {bv.shape} does not match {a.shape}")
        return make_result(a.data * bv, (a,), lambda g: (g * bv,), "mul_const")
    _check_same(a, b, "mul")
    ad, bd = a.data, b.data
    sa, sb = a.shape, b.shape

    def backward(g):
        return _reduce_to(g * bd, sa), _reduce_to(g * ad, sb)

    return make_result(ad * bd, (a, b), backward, "mul")


def square(a: Tensor) -> Tensor:
    ad = a.data
    return make_result(ad * ad, (a,), lambda g: (2.0 * ad * g,), "square")


def abs(a: Tensor) -> Tensor:
    ad = a.data
    return make_result(np.abs(ad), (a,), lambda g: (np.sign(ad) * g,), "abs")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product. ``b`` may be 2-D and shared across a's batch."""
    ad, bd = a.data, b.data
    if ad.shape[-1] != bd.shape[-2]:
        raise ValueError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    if bd.ndim != 2 and ad.shape[:-2] != bd.shape[:-2]:
        raise ValueError(f"matmul: batch shapes differ, {a.shape} @ {b.shape}")
    out = ad @ bd

    def backward(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        if bd.ndim == 2 and ad.ndim > 2:
            gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            gb = np.swapaxes(ad, -1, -2) @ g
        return ga, gb

    return make_result(out, (a, b), backward, "matmul")


def sum(a: Tensor, axis=None) -> Tensor:
    shape = a.shape
    out = a.data.sum(axis=axis)

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return make_result(np.asarray(out), (a,), backward, "sum")


def mean(a: Tensor, axis=None) -> Tensor:
    if axis is None:
        n = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        n = int(np.prod([a.shape[i] for i in axes]))
    return mul(sum(a, axis), 1.0 / n)


def reshape(a: Tensor, shape) -> Tensor:
    src = a.shape
    return make_result(a.data.reshape(shape), (a,), lambda g: (g.reshape(src),), "reshape")


def expand(a: Tensor, shape) -> Tensor:
    """Explicitly repeat size-1 axes up to ``shape`` (same rank required)."""
    shape = tuple(shape)
    if len(shape) != a.ndim or any(s != d and s != 1 for s, d in zip(a.shape, shape)):
        raise ValueError(f"expand: cannot expand {a.shape} to {shape}")
    axes = tuple(i for i, (s, d) in enumerate(zip(a.shape, shape)) if s != d)
    return make_result(np.broadcast_to(a.data, shape).copy(), (a,),
                       lambda g: (g.sum(axis=axes, keepdims=True),), "expand")


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return make_result(np.ascontiguousarray(a.data.transpose(axes)), (a,),
                       lambda g: (np.ascontiguousarray(g.transpose(inv)),), "transpose")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    out = np.concatenate([t.data for t in tensors], axis=axis)

    def backward(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return make_result(out, tensors, backward, "concat")


def getitem(a: Tensor, index) -> Tensor:
    shape, dtype = a.shape, a.dtype

    def backward(g):
        full = np.zeros(shape, dtype=dtype)
        full[index] = g
        return (full,)

    return make_result(np.ascontiguousarray(a.data[index]), (a,), backward, "getitem")


def relu(a: Tensor) -> Tensor:
    ad = a.data
    return make_result(np.maximum(ad, 0), (a,), lambda g: (g * (ad > 0),), "relu")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return make_result(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype)
    return make_result(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def softmax_lastdim(a: Tensor) -> Tensor:
    x = a.data
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return make_result(out, (a,), backward, "softmax")


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation over NCHW input, im2col formulation."""
    if x.ndim != 4 or weight.ndim != 4:
        raise ValueError(f"conv2d: expected 4-D input and weight, got {x.shape} and {weight.shape}")
    B, C, H, W = x.shape
    Co, Ci, kh, kw = weight.shape
    if C != Ci:
        raise ValueError(f"conv2d: input has {C} channels but weight {weight.shape} expects {Ci}")
    if bias is not None and bias.shape != (Co,):
        raise ValueError(f"conv2d: bias shape {bias.shape} != ({Co},)")
    s, p = stride, padding
    Hp, Wp = H + 2 * p, W + 2 * p
    Ho, Wo = (Hp - kh) // s + 1, (Wp - kw) // s + 1
    if Ho < 1 or Wo < 1:
        raise ValueError(f"conv2d: kernel {kh}x{kw} larger than padded input {Hp}x{Wp}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p))) if p else x.data
    if kh == 1 and kw == 1:
        cols = xp[:, :, ::s, ::s][:, :, :Ho, :Wo].transpose(0, 2, 3, 1).reshape(B * Ho * Wo, C)
    else:
        win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::s, ::s][:, :, :Ho, :Wo]
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(B * Ho * Wo, C * kh * kw)
    wmat = weight.data.reshape(Co, -1)
    out = cols @ wmat.T
    if bias is not None:
        out += bias.data
    out = np.ascontiguousarray(out.reshape(B, Ho, Wo, Co).transpose(0, 3, 1, 2))

    def backward(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(-1, Co)
        gw = (g2.T @ cols).reshape(weight.shape) if weight.requires_grad else None
        gb = g2.sum(axis=0) if bias is not None and bias.requires_grad else None
        gx = None
        if x.requires_grad:
            dcols = (g2 @ wmat).reshape(B, Ho, Wo, C, kh, kw).transpose(0, 3, 4, 5, 1, 2)
            dxp = np.zeros((B, C, Hp, Wp), dtype=g.dtype)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i:i + s * (Ho - 1) + 1:s, j:j + s * (Wo - 1) + 1:s] += dcols[:, :, i, j]
            gx = dxp[:, :, p:p + H, p:p + W] if p else dxp
            gx = np.ascontiguousarray(gx)
        return (gx, gw, gb) if bias is not None else (gx, gw)

    inputs = (x, weight, bias) if bias is not None else (x, weight)
    return make_result(out, inputs, backward, "conv2d")


def group_norm(x: Tensor, groups: int, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    B, C, H, W = x.shape
    if C % groups:
        raise ValueError(f"group_norm: {groups} groups do not divide {C} channels")
    xg = x.data.reshape(B, groups, -1)
    mu = xg.mean(axis=2, keepdims=True)
    var = xg.var(axis=2, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = ((xg - mu) * inv).reshape(B, C, H, W)
    gd = gamma.data.reshape(1, C, 1, 1)
    out = xhat * gd + beta.data.reshape(1, C, 1, 1)

    def backward(g):
        ggamma = (g * xhat).sum(axis=(0, 2, 3))
        gbeta = g.sum(axis=(0, 2, 3))
        dxh = (g * gd).reshape(B, groups, -1)
        xh = xhat.reshape(B, groups, -1)
        dx = inv * (dxh - dxh.mean(axis=2, keepdims=True) - xh * (dxh * xh).mean(axis=2, keepdims=True))
        return dx.reshape(B, C, H, W), ggamma, gbeta

    return make_result(out, (x, gamma, beta), backward, "group_norm")


def avg_pool2d(x: Tensor, kernel: int) -> Tensor:
    """Non-overlapping mean pooling over the last two axes (any leading shape)."""
    *lead, H, W = x.shape
    k = kernel
    if H % k or W % k:
        raise ValueError(f"avg_pool2d: spatial dims {H}x{W} not divisible by kernel {k}")
    out = x.data.reshape(*lead, H // k, k, W // k, k).mean(axis=(-3, -1))

    def backward(g):
        gx = np.repeat(np.repeat(g, k, axis=-2), k, axis=-1) / (k * k)
        return (gx,)

    return make_result(out, (x,), backward, "avg_pool2d")


def _corner_setup(c: np.ndarray, n: int):
    """Clamp continuous coordinates to [0, n-1]; return lower index, weight, inside mask."""
    cc = np.clip(c, 0, n - 1)
    if n == 1:
        i0 = np.zeros(c.shape, dtype=np.int64)
        return i0, i0, np.zeros_like(cc), np.zeros(c.shape, dtype=bool)
    f = np.minimum(np.floor(cc), n - 2)
    i0 = f.astype(np.int64)
    return i0, i0 + 1, cc - f, (c >= 0) & (c <= n - 1)


def bilinear_sample(x: Tensor, coords: Tensor) -> Tensor:
    """Sample ``x[B,C,H,W]`` at ``coords[B,H',W',2]`` = (column, row) pixel positions.

    Coordinates outside the image are clamped to the border (replicate
    padding), so their gradient with respect to position is zero.
    """
    B, C, H, W = x.shape
    if coords.ndim != 4 or coords.shape[0] != B or coords.shape[-1] != 2:
        raise ValueError(f"bilinear_sample: coords {coords.shape} incompatible with input {x.shape}")
    Ho, Wo = coords.shape[1], coords.shape[2]
    P = Ho * Wo
    cx = coords.data[..., 0].reshape(B, P)
    cy = coords.data[..., 1].reshape(B, P)
    x0, x1, wx, inx = _corner_setup(cx, W)
    y0, y1, wy, iny = _corner_setup(cy, H)
    flat = x.data.reshape(B, C, H * W)
    idx = [y0 * W + x0, y0 * W + x1, y1 * W + x0, y1 * W + x1]
    vals = [np.take_along_axis(flat, np.broadcast_to(i[:, None, :], (B, C, P)), axis=2) for i in idx]
    wts = [(1 - wy) * (1 - wx), (1 - wy) * wx, wy * (1 - wx), wy * wx]
    out = builtins.sum(w[:, None, :] * v for w, v in zip(wts, vals))
    out = out.reshape(B, C, Ho, Wo)

    def backward(g):
        g = g.reshape(B, C, P)
        gx = gc = None
        if x.requires_grad:
            base = (np.arange(B * C, dtype=np.int64) * (H * W)).reshape(B, C, 1)
            flat_idx = np.concatenate([(base + i[:, None, :]).ravel() for i in idx])
            flat_w = np.concatenate([(g * w[:, None, :]).ravel() for w in wts])
            gx = np.bincount(flat_idx, weights=flat_w, minlength=B * C * H * W)
            gx = gx.astype(x.dtype).reshape(B, C, H, W)
        if coords.requires_grad:
            v00, v01, v10, v11 = vals
            dx = ((1 - wy)[:, None] * (v01 - v00) + wy[:, None] * (v11 - v10)) * g
            dy = ((1 - wx)[:, None] * (v10 - v00) + wx[:, None] * (v11 - v01)) * g
            gcx = dx.sum(axis=1) * inx
            gcy = dy.sum(axis=1) * iny
            gc = np.stack([gcx, gcy], axis=-1).reshape(B, Ho, Wo, 2).astype(coords.dtype)
        return gx, gc

    return make_result(out, (x, coords), backward, "bilinear_sample")


def upsample_matrix(n: int, factor: int, dtype=np.float64) -> np.ndarray:
    """Linear interpolation matrix (n*factor x n), half-pixel centres, edge clamp."""
    m = n * factor
    src = np.clip((np.arange(m) + 0.5) / factor - 0.5, 0, n - 1)
    lo = np.minimum(np.floor(src).astype(np.int64), max(n - 2, 0))
    frac = src - lo
    mat = np.zeros((m, n), dtype=dtype)
    rows = np.arange(m)
    np.add.at(mat, (rows, lo), 1 - frac)
    if n > 1:
        np.add.at(mat, (rows, lo + 1), frac)
    return mat


def resize_bilinear(x: Tensor, factor: int) -> Tensor:
    """Bilinear upsampling of the last two axes by an integer factor."""
    *lead, H, W = x.shape
    mh = upsample_matrix(H, factor, x.dtype)
    mw = upsample_matrix(W, factor, x.dtype)
    out = mh @ x.data @ mw.T

    def backward(g):
        return (mh.T @ g @ mw,)

    return make_result(out, (x,), backward, "resize_bilinear")
