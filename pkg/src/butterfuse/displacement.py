"""Neighbour similarity, displacement prediction and feature resampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .functional import bilinear_sample, conv2d, sigmoid, unfold
from .tensor import Tensor, as_tensor, concat, record_branch, tsum

# (row, col) offsets of the 8 neighbours, in similarity-channel order
NEIGHBOR_OFFSETS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))
_NEIGHBOR_TAPS = [(a + 1) * 3 + (b + 1) for a, b in NEIGHBOR_OFFSETS]


@dataclass(frozen=True)
class DisplacementParams:
    orient: Tensor  # [2, C+8, 3, 3]
    scale: Tensor  # [2, C+8, 3, 3]


@dataclass(frozen=True)
class DisplacementField:
    d: Tensor  # [2, H, W] (row, col) offsets in pixels
    o: Tensor  # raw orientation
    p: Tensor  # sigmoid scale


def init_displacement_params(channels: int, rng: np.random.Generator, scale: float = 0.1,
                             zero: bool = False) -> DisplacementParams:
    shape = (2, channels + 8, 3, 3)

    def draw():
        return Tensor(np.zeros(shape) if zero else scale * rng.standard_normal(shape))

    return DisplacementParams(draw(), draw())


def normalize_channels(m: Tensor) -> Tensor:
    """Unit-normalize each pixel's channel vector; zero vectors stay zero."""
    m = as_tensor(m)
    norm = np.sqrt((m.data ** 2).sum(axis=0, keepdims=True))
    record_branch(norm > 0)
    safe = np.where(norm > 0, norm, 1.0)
    u = m.data / safe

    def backward(g):
        return (np.where(norm > 0, (g - u * (u * g).sum(axis=0, keepdims=True)) / safe, 0.0),)

    return Tensor.from_op(u, (m,), "normalize_channels", backward)


def local_cosine_similarity(m: Tensor) -> Tensor:
    """Cosine similarity of every pixel with its 8 neighbours, ``[8, H, W]``.

    Borders use replicate padding; a zero channel vector has similarity 0.
    """
    m = as_tensor(m)
    if m.ndim != 3 or m.dims[0] < 1:
        raise ShapeError(f"expected [C>=1, H, W], got {list(m.dims)}")
    u = normalize_channels(m)
    neighbors = unfold(u, 3, padding="replicate")[_NEIGHBOR_TAPS]  # [8, C, H, W]
    return tsum(neighbors * u, axis=1)


def displacement_field(m: Tensor, s: Tensor, params: DisplacementParams) -> DisplacementField:
    m, s = as_tensor(m), as_tensor(s)
    if m.dims[1:] != s.dims[1:]:
        raise ShapeError(f"feature {list(m.dims)} and similarity {list(s.dims)} "
                         f"spatial dims differ")
    x = concat([m, s], axis=0)
    o = conv2d(x, params.orient)
    p = sigmoid(conv2d(x, params.scale))
    return DisplacementField(o * p, o, p)


def base_grid(h: int, w: int) -> np.ndarray:
    rows, cols = np.meshgrid(np.arange(h, dtype=float), np.arange(w, dtype=float), indexing="ij")
    return np.stack([rows, cols])


def resample(x: Tensor, d: DisplacementField | Tensor) -> Tensor:
    """Bilinearly sample ``x`` at ``(i + d_row, j + d_col)``, coordinates clamped."""
    x = as_tensor(x)
    offsets = d.d if isinstance(d, DisplacementField) else as_tensor(d)
    if offsets.dims != (2,) + x.dims[1:]:
        raise ShapeError(f"displacement {list(offsets.dims)} does not match input "
                         f"{list(x.dims)}")
    grid = Tensor(base_grid(*x.dims[1:]), dtype=offsets.dtype)
    return bilinear_sample(x, grid + offsets)
