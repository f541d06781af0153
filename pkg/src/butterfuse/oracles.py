"""Direct-summation reference implementations.

Deliberately loop-based and free of the vectorised machinery they check:
no window views, no DFT matrices, only scalar arithmetic over Python lists.
"""

from __future__ import annotations

import cmath
import math

import numpy as np


def _fetch(img, r, q, padding):
    h, w = len(img), len(img[0])
    if padding == "replicate":
        return img[min(max(r, 0), h - 1)][min(max(q, 0), w - 1)]
    if 0 <= r < h and 0 <= q < w:
        return img[r][q]
    return 0.0


def conv2d(x: np.ndarray, kernel: np.ndarray, padding: str = "zero", stride: int = 1,
           bias: np.ndarray | None = None) -> np.ndarray:
    xs, ks = x.tolist(), kernel.tolist()
    c_out, c_in, k, _ = kernel.shape
    h, w = x.shape[1:]
    p = k // 2
    ho, wo = (h - 1) // stride + 1, (w - 1) // stride + 1
    out = np.zeros((c_out, ho, wo))
    for o in range(c_out):
        for i in range(ho):
            for j in range(wo):
                acc = 0.0 if bias is None else float(bias[o])
                for c in range(c_in):
                    for a in range(k):
                        for b in range(k):
                            acc += ks[o][c][a][b] * _fetch(xs[c], i * stride + a - p,
                                                           j * stride + b - p, padding)
                out[o, i, j] = acc
    return out


def depthwise_conv2d(x: np.ndarray, kernel: np.ndarray, padding: str = "zero",
                     stride: int = 1) -> np.ndarray:
    xs, ks = x.tolist(), kernel.tolist()
    c, k, _ = kernel.shape
    h, w = x.shape[1:]
    p = k // 2
    ho, wo = (h - 1) // stride + 1, (w - 1) // stride + 1
    out = np.zeros((c, ho, wo))
    for ch in range(c):
        for i in range(ho):
            for j in range(wo):
                acc = 0.0
                for a in range(k):
                    for b in range(k):
                        acc += ks[ch][a][b] * _fetch(xs[ch], i * stride + a - p,
                                                     j * stride + b - p, padding)
                out[ch, i, j] = acc
    return out


def bilinear_sample(x: np.ndarray, coords: np.ndarray) -> np.ndarray:
    xs = x.tolist()
    c, h, w = x.shape
    ho, wo = coords.shape[1:]
    out = np.zeros((c, ho, wo))
    for i in range(ho):
        for j in range(wo):
            r = min(max(float(coords[0, i, j]), 0.0), h - 1.0)
            q = min(max(float(coords[1, i, j]), 0.0), w - 1.0)
            r0, q0 = min(int(math.floor(r)), h - 1), min(int(math.floor(q)), w - 1)
            r1, q1 = min(r0 + 1, h - 1), min(q0 + 1, w - 1)
            fr, fq = r - r0, q - q0
            for ch in range(c):
                img = xs[ch]
                out[ch, i, j] = ((1 - fr) * (1 - fq) * img[r0][q0] + (1 - fr) * fq * img[r0][q1]
                                 + fr * (1 - fq) * img[r1][q0] + fr * fq * img[r1][q1])
    return out


def dft2(x: np.ndarray) -> np.ndarray:
    """``1/(HW) sum_{h,w} x[h,w] exp(-2 pi j (u h / H + v w / W))`` per leading slice."""
    flat = x.reshape((-1,) + x.shape[-2:])
    h, w = x.shape[-2:]
    out = np.zeros(flat.shape, dtype=complex)
    for s, img in enumerate(flat.tolist()):
        for u in range(h):
            for v in range(w):
                acc = 0j
                for r in range(h):
                    for q in range(w):
                        acc += img[r][q] * cmath.exp(-2j * math.pi * (u * r / h + v * q / w))
                out[s, u, v] = acc / (h * w)
    return out.reshape(x.shape)
