"""Differentiable image operators on ``[C, H, W]`` tensors.

Neighbourhood operators share one window layout: a ``k x k`` window is
enumerated row-major over offsets ``(a, b)`` in ``[-(k//2), k//2]``, so flat
offset index ``(a + r) * k + (b + r)`` with ``r = k // 2``.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError
from .tensor import Tensor, as_tensor, record_branch

PADDING_MODES = ("zero", "replicate")

# Test hook: value added to every softmax output (fault injection for the
# verification suite). Never set outside tests.
_FAULTS: dict[str, float] = {}


def _check_padding(padding: str) -> None:
    if padding not in PADDING_MODES:
        raise ValueError(f"unknown padding mode {padding!r}; expected one of {PADDING_MODES}")


def _pad(x: np.ndarray, p: int, padding: str) -> np.ndarray:
    if p == 0:
        return x
    width = [(0, 0)] * (x.ndim - 2) + [(p, p), (p, p)]
    return np.pad(x, width, mode="edge" if padding == "replicate" else "constant")


def _pad_adjoint(g: np.ndarray, p: int, padding: str) -> np.ndarray:
    if p == 0:
        return g
    g = g.copy()
    if padding == "replicate":
        g[..., p, :] += g[..., :p, :].sum(axis=-2)
        g[..., -p - 1, :] += g[..., -p:, :].sum(axis=-2)
    g = g[..., p:-p, :]
    if padding == "replicate":
        g[..., :, p] += g[..., :, :p].sum(axis=-1)
        g[..., :, -p - 1] += g[..., :, -p:].sum(axis=-1)
    return g[..., :, p:-p]


def _out_size(n: int, k: int, stride: int) -> int:
    return (n + 2 * (k // 2) - k) // stride + 1


def _windows(x: np.ndarray, k: int, stride: int, padding: str) -> np.ndarray:
    """Padded sliding windows of ``x[..., H, W]`` as ``[..., k, k, Ho, Wo]`` (a copy)."""
    xp = _pad(x, k // 2, padding)
    ho, wo = _out_size(x.shape[-2], k, stride), _out_size(x.shape[-1], k, stride)
    win = sliding_window_view(xp, (k, k), axis=(-2, -1))
    win = win[..., : (ho - 1) * stride + 1: stride, : (wo - 1) * stride + 1: stride, :, :]
    return np.ascontiguousarray(np.moveaxis(win, (-2, -1), (-4, -3)))


def _windows_adjoint(g: np.ndarray, shape: tuple[int, ...], k: int, stride: int,
                     padding: str) -> np.ndarray:
    """Adjoint of :func:`_windows`: scatter-add ``[..., k, k, Ho, Wo]`` back to ``shape``."""
    p = k // 2
    ho, wo = g.shape[-2:]
    gp = np.zeros(shape[:-2] + (shape[-2] + 2 * p, shape[-1] + 2 * p), dtype=g.dtype)
    for a in range(k):
        for b in range(k):
            gp[..., a: a + (ho - 1) * stride + 1: stride,
               b: b + (wo - 1) * stride + 1: stride] += g[..., a, b, :, :]
    return _pad_adjoint(gp, p, padding)


def conv2d(x: Tensor, kernel: Tensor, padding: str = "zero", stride: int = 1,
           bias: Tensor | None = None) -> Tensor:
    """Same-padded cross-correlation of ``[C_in, H, W]`` with ``[C_out, C_in, k, k]``."""
    x, kernel = as_tensor(x), as_tensor(kernel)
    _check_padding(padding)
    if x.ndim != 3 or kernel.ndim != 4:
        raise ShapeError(f"conv2d expects input [C,H,W] and kernel [O,C,k,k], "
                         f"got {list(x.dims)} and {list(kernel.dims)}")
    c_out, c_in, k, k2 = kernel.dims
    if k != k2 or k % 2 == 0:
        raise ShapeError(f"conv2d kernel must be square with odd extent, got {k}x{k2}")
    if c_in != x.dims[0]:
        raise ShapeError(f"conv2d channel mismatch: input has {x.dims[0]} channels, "
                         f"kernel expects {c_in} (kernel dims {list(kernel.dims)})")
    cols = _windows(x.data, k, stride, padding)
    ho, wo = cols.shape[-2:]
    cols2 = cols.reshape(c_in * k * k, ho * wo)
    w2 = kernel.data.reshape(c_out, -1)
    out = (w2 @ cols2).reshape(c_out, ho, wo)
    parents = [x, kernel]
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data[:, None, None]
        parents.append(bias)

    def backward(g):
        g2 = g.reshape(c_out, -1)
        gx = _windows_adjoint((w2.T @ g2).reshape(cols.shape), x.dims, k, stride, padding)
        grads = [gx, (g2 @ cols2.T).reshape(kernel.dims)]
        if bias is not None:
            grads.append(g2.sum(axis=1))
        return grads

    return Tensor.from_op(out, parents, "conv2d", backward)


def depthwise_conv2d(x: Tensor, kernel: Tensor, padding: str = "zero",
                     stride: int = 1) -> Tensor:
    """Per-channel cross-correlation of ``[C, H, W]`` with ``[C, k, k]``."""
    x, kernel = as_tensor(x), as_tensor(kernel)
    _check_padding(padding)
    if x.ndim != 3 or kernel.ndim != 3:
        raise ShapeError(f"depthwise_conv2d expects [C,H,W] and [C,k,k], "
                         f"got {list(x.dims)} and {list(kernel.dims)}")
    c, k, k2 = kernel.dims
    if k != k2 or k % 2 == 0:
        raise ShapeError(f"depthwise kernel must be square with odd extent, got {k}x{k2}")
    if c != x.dims[0]:
        raise ShapeError(f"depthwise_conv2d channel mismatch: input {x.dims[0]}, kernel {c}")
    cols = _windows(x.data, k, stride, padding)
    out = np.einsum("ckl,cklhw->chw", kernel.data, cols)

    def backward(g):
        gcols = kernel.data[:, :, :, None, None] * g[:, None, None, :, :]
        return (_windows_adjoint(gcols, x.dims, k, stride, padding),
                np.einsum("chw,cklhw->ckl", g, cols))

    return Tensor.from_op(out, (x, kernel), "depthwise_conv2d", backward)


def unfold(x: Tensor, k: int, padding: str = "replicate") -> Tensor:
    """Stride-1 neighbourhoods of ``[C, H, W]`` as ``[k*k, C, H, W]``."""
    x = as_tensor(x)
    _check_padding(padding)
    if k % 2 == 0:
        raise ShapeError(f"unfold window must be odd, got {k}")
    c, h, w = x.dims
    cols = _windows(x.data, k, 1, padding)
    out = np.moveaxis(cols, 0, 2).reshape(k * k, c, h, w)

    def backward(g):
        g = np.moveaxis(g.reshape(k, k, c, h, w), 2, 0)
        return (_windows_adjoint(g, x.dims, k, 1, padding),)

    return Tensor.from_op(out, (x,), "unfold", backward)


def max_pool2d(x: Tensor, k: int, stride: int = 1, padding: str = "replicate") -> Tensor:
    x = as_tensor(x)
    c = x.dims[0]
    cols = _windows(x.data, k, stride, padding)
    ho, wo = cols.shape[-2:]
    flat = cols.reshape(c, k * k, ho, wo)
    idx = np.argmax(flat, axis=1)[:, None]
    record_branch(idx)
    out = np.take_along_axis(flat, idx, axis=1)[:, 0]

    def backward(g):
        gflat = np.zeros_like(flat)
        np.put_along_axis(gflat, idx, g[:, None], axis=1)
        return (_windows_adjoint(gflat.reshape(cols.shape), x.dims, k, stride, padding),)

    return Tensor.from_op(out, (x,), "max_pool2d", backward)


def softmax(t: Tensor, axis: int = 0) -> Tensor:
    """Max-subtracted softmax along ``axis``."""
    t = as_tensor(t)
    if not -t.ndim <= axis < t.ndim:
        raise ShapeError(f"softmax axis {axis} out of range for dims {list(t.dims)}")
    z = np.exp(t.data - t.data.max(axis=axis, keepdims=True))
    # entries more than ~745 below the max underflow; keep them strictly positive
    out = np.maximum(z / z.sum(axis=axis, keepdims=True), np.finfo(z.dtype).tiny)
    if "softmax" in _FAULTS:
        out = out + _FAULTS["softmax"]

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor.from_op(out, (t,), "softmax", backward)


def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    z = np.exp(-np.abs(x))
    y = np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    # exp(-|x|) underflows past |x| ~ 745; keep the lower tail strictly positive.
    return np.maximum(y, np.finfo(y.dtype).tiny).astype(x.dtype, copy=False)


def sigmoid(t: Tensor) -> Tensor:
    t = as_tensor(t)
    out = _sigmoid_np(t.data)
    return Tensor.from_op(out, (t,), "sigmoid", lambda g: (g * out * (1.0 - out),))


def silu(t: Tensor) -> Tensor:
    t = as_tensor(t)
    s = _sigmoid_np(t.data)
    return Tensor.from_op(t.data * s, (t,), "silu",
                          lambda g: (g * s * (1.0 + t.data * (1.0 - s)),))


def space_to_depth(t: Tensor) -> Tensor:
    """``[C, 2H, 2W] -> [4C, H, W]``; channel ``4c + 2*dy + dx`` holds phase ``(dy, dx)``."""
    t = as_tensor(t)
    if t.ndim != 3 or t.dims[1] % 2 or t.dims[2] % 2:
        raise ShapeError(f"space_to_depth needs [C, even H, even W], got {list(t.dims)}")
    c, h2, w2 = t.dims
    h, w = h2 // 2, w2 // 2
    out = t.data.reshape(c, h, 2, w, 2).transpose(0, 2, 4, 1, 3).reshape(4 * c, h, w)
    return Tensor.from_op(out, (t,), "space_to_depth",
                          lambda g: (_d2s(g),))


def _d2s(x: np.ndarray) -> np.ndarray:
    c4, h, w = x.shape
    c = c4 // 4
    return x.reshape(c, 2, 2, h, w).transpose(0, 3, 1, 4, 2).reshape(c, 2 * h, 2 * w)


def _s2d(x: np.ndarray) -> np.ndarray:
    c, h2, w2 = x.shape
    return (x.reshape(c, h2 // 2, 2, w2 // 2, 2).transpose(0, 2, 4, 1, 3)
            .reshape(4 * c, h2 // 2, w2 // 2))


def depth_to_space(t: Tensor) -> Tensor:
    """Inverse of :func:`space_to_depth`: ``[4C, H, W] -> [C, 2H, 2W]``."""
    t = as_tensor(t)
    if t.ndim != 3 or t.dims[0] % 4:
        raise ShapeError(f"depth_to_space needs [4C, H, W], got {list(t.dims)}")
    return Tensor.from_op(_d2s(t.data), (t,), "depth_to_space", lambda g: (_s2d(g),))


def upsample_nearest(t: Tensor) -> Tensor:
    """Factor-2 nearest-neighbour upsampling of ``[C, H, W]``."""
    t = as_tensor(t)
    c, h, w = t.dims
    out = np.repeat(np.repeat(t.data, 2, axis=1), 2, axis=2)
    return Tensor.from_op(out, (t,), "upsample_nearest",
                          lambda g: (g.reshape(c, h, 2, w, 2).sum(axis=(2, 4)),))


def bilinear_sample(t: Tensor, coords: Tensor) -> Tensor:
    """Sample ``[C, H, W]`` at absolute ``(row, col)`` positions ``[2, H', W']``.

    Positions are clamped to ``[0, H-1] x [0, W-1]``; the gradient with
    respect to a clamped coordinate is zero.
    """
    t, coords = as_tensor(t), as_tensor(coords)
    if t.ndim != 3 or coords.ndim != 3 or coords.dims[0] != 2:
        raise ShapeError(f"bilinear_sample expects [C,H,W] and [2,H',W'], "
                         f"got {list(t.dims)} and {list(coords.dims)}")
    c, h, w = t.dims
    r = np.clip(coords.data[0], 0, h - 1)
    q = np.clip(coords.data[1], 0, w - 1)
    r0 = np.clip(np.floor(r).astype(np.int64), 0, max(h - 2, 0))
    q0 = np.clip(np.floor(q).astype(np.int64), 0, max(w - 2, 0))
    r1 = np.minimum(r0 + 1, h - 1)
    q1 = np.minimum(q0 + 1, w - 1)
    fr = r - r0
    fq = q - q0
    v00, v01 = t.data[:, r0, q0], t.data[:, r0, q1]
    v10, v11 = t.data[:, r1, q0], t.data[:, r1, q1]
    w00, w01 = (1 - fr) * (1 - fq), (1 - fr) * fq
    w10, w11 = fr * (1 - fq), fr * fq
    out = w00 * v00 + w01 * v01 + w10 * v10 + w11 * v11
    inside_r = (coords.data[0] >= 0) & (coords.data[0] <= h - 1)
    inside_q = (coords.data[1] >= 0) & (coords.data[1] <= w - 1)
    record_branch(r0, q0, inside_r, inside_q)

    def backward(g):
        gt = np.zeros_like(t.data)
        flat = gt.reshape(c, -1)
        for idx, wt in (((r0, q0), w00), ((r0, q1), w01), ((r1, q0), w10), ((r1, q1), w11)):
            lin = (idx[0] * w + idx[1]).reshape(-1)
            np.add.at(flat, (slice(None), lin), (g * wt).reshape(c, -1))
        d_r = ((1 - fq) * (v10 - v00) + fq * (v11 - v01)) * g
        d_q = ((1 - fr) * (v01 - v00) + fr * (v11 - v10)) * g
        gc = np.stack([d_r.sum(axis=0) * inside_r, d_q.sum(axis=0) * inside_q])
        if h == 1:
            gc[0] = 0
        if w == 1:
            gc[1] = 0
        return gt, gc

    return Tensor.from_op(out, (t, coords), "bilinear_sample", backward)
