"""Progressive hierarchical fusion over a 4-level pyramid with per-pixel level weighting.

The chain ``F23 -> F234 -> F2345`` folds one coarser backbone level in at a
time: the running feature is downsampled to the next grid, stacked with the
backbone level along channels and mixed by a learned 1x1 projection. Each
head input at strides 8/16/32 then blends three stride-aligned candidates
with per-pixel convex weights (softmax over one logit map per candidate).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .fafce import FafceParams, fafce_forward
from .functional import conv2d, depthwise_conv2d, softmax, upsample_nearest
from .tensor import Tensor, as_tensor, concat, reshape


@dataclass(frozen=True)
class PyramidFeatures:
    c2: Tensor
    c3: Tensor
    c4: Tensor
    c5: Tensor

    def levels(self) -> tuple[Tensor, Tensor, Tensor, Tensor]:
        return (self.c2, self.c3, self.c4, self.c5)

    def validate(self) -> None:
        levels = [as_tensor(t) for t in self.levels()]
        for t in levels:
            if t.ndim != 3:
                raise ShapeError(f"pyramid levels must be [C,H,W], got {list(t.dims)}")
        for fine, coarse in zip(levels, levels[1:]):
            if fine.dims[0] != coarse.dims[0]:
                raise ShapeError(f"pyramid channel widths differ: {fine.dims[0]} vs "
                                 f"{coarse.dims[0]}")
            if fine.dims[1:] != (2 * coarse.dims[1], 2 * coarse.dims[2]):
                raise ShapeError(f"pyramid level {list(coarse.dims)} is not half of "
                                 f"{list(fine.dims)}")


@dataclass(frozen=True)
class FusionWeights:
    lambdas: Tensor  # [3, H, W], convex per pixel


@dataclass(frozen=True)
class CasfParams:
    levels: tuple[Tensor, Tensor, Tensor]  # one [1, C, 1, 1] logit projection per input


@dataclass(frozen=True)
class FuseStepParams:
    down: Tensor  # [C, 3, 3] stride-2 depthwise
    mix: Tensor  # [C, 2C, 1, 1]


@dataclass(frozen=True)
class FusionBlockParams:
    casf: CasfParams
    down: Tensor  # [C, 3, 3] stride-2 depthwise for the finer neighbour


@dataclass(frozen=True)
class PhffParams:
    steps: tuple[FuseStepParams, FuseStepParams, FuseStepParams]
    blocks: tuple[FusionBlockParams, FusionBlockParams, FusionBlockParams]
    fafce: FafceParams | None = None  # refines the stride-4 head input


@dataclass(frozen=True)
class FusedPyramid:
    f23: Tensor
    f234: Tensor
    f2345: Tensor
    head_inputs: tuple[Tensor, Tensor, Tensor, Tensor]  # strides 4, 8, 16, 32
    fusion_inputs: tuple[tuple[Tensor, Tensor, Tensor], ...] = ()
    fusion_weights: tuple[FusionWeights, ...] = ()


def _down_kernel(channels: int, rng: np.random.Generator, zero: bool) -> Tensor:
    if zero:
        return Tensor(np.zeros((channels, 3, 3)))
    return Tensor(rng.standard_normal((channels, 3, 3)) / 3.0)


def init_casf_params(channels: int, rng: np.random.Generator, scale: float = 0.1,
                     zero: bool = False) -> CasfParams:
    def draw():
        shape = (1, channels, 1, 1)
        return Tensor(np.zeros(shape) if zero else scale * rng.standard_normal(shape))

    return CasfParams((draw(), draw(), draw()))


def init_phff_params(channels: int, rng: np.random.Generator, fafce: FafceParams | None = None,
                     zero: bool = False) -> PhffParams:
    steps = []
    for _ in range(3):
        mix = np.zeros((channels, 2 * channels, 1, 1)) if zero else (
            rng.standard_normal((channels, 2 * channels, 1, 1)) / np.sqrt(2 * channels))
        steps.append(FuseStepParams(_down_kernel(channels, rng, zero), Tensor(mix)))
    blocks = tuple(FusionBlockParams(init_casf_params(channels, rng, zero=zero),
                                     _down_kernel(channels, rng, zero)) for _ in range(3))
    return PhffParams(tuple(steps), blocks, fafce)


def casf_weights(x1: Tensor, x2: Tensor, x3: Tensor, params: CasfParams) -> FusionWeights:
    xs = [as_tensor(x) for x in (x1, x2, x3)]
    if not xs[0].dims == xs[1].dims == xs[2].dims:
        raise ShapeError(f"CASF inputs differ in dims: {[list(x.dims) for x in xs]}")
    logits = concat([conv2d(x, w) for x, w in zip(xs, params.levels)], axis=0)
    return FusionWeights(softmax(logits, axis=0))


def casf_fuse(x1: Tensor, x2: Tensor, x3: Tensor, lam: FusionWeights) -> Tensor:
    """Per-pixel convex combination ``sum_n lambda_n * x_n`` broadcast over channels."""
    xs = [as_tensor(x) for x in (x1, x2, x3)]
    if not xs[0].dims == xs[1].dims == xs[2].dims:
        raise ShapeError(f"CASF inputs differ in dims: {[list(x.dims) for x in xs]}")
    if lam.lambdas.dims != (3,) + xs[0].dims[1:]:
        raise ShapeError(f"fusion weights {list(lam.lambdas.dims)} do not match inputs "
                         f"{list(xs[0].dims)}")
    h, w = xs[0].dims[1:]
    out = None
    for n, x in enumerate(xs):
        term = reshape(lam.lambdas[n], (1, h, w)) * x
        out = term if out is None else out + term
    return out


def downsample(x: Tensor, kernel: Tensor) -> Tensor:
    return depthwise_conv2d(x, kernel, stride=2)


def hierarchical_fuse_step(f_prev: Tensor, c_next: Tensor, params: FuseStepParams) -> Tensor:
    """``W . [down(f_prev); c_next]`` on the grid of ``c_next``."""
    f_prev, c_next = as_tensor(f_prev), as_tensor(c_next)
    h, w = c_next.dims[1:]
    if f_prev.dims[1:] != (2 * h, 2 * w):
        raise ShapeError(f"{list(f_prev.dims)} is not one stride finer than {list(c_next.dims)}")
    stacked = concat([downsample(f_prev, params.down), c_next], axis=0)
    return conv2d(stacked, params.mix)


def _blend(x1: Tensor, x2: Tensor, x3: Tensor, casf: CasfParams):
    lam = casf_weights(x1, x2, x3, casf)
    return casf_fuse(x1, x2, x3, lam), lam


def phffnet_forward(p: PyramidFeatures, params: PhffParams) -> FusedPyramid:
    p.validate()
    c2, c3, c4, c5 = (as_tensor(t) for t in p.levels())
    f23 = hierarchical_fuse_step(c2, c3, params.steps[0])
    f234 = hierarchical_fuse_step(f23, c4, params.steps[1])
    f2345 = hierarchical_fuse_step(f234, c5, params.steps[2])

    p2 = fafce_forward(c2, f23, params.fafce) if params.fafce is not None else c2
    b8, b16, b32 = params.blocks
    inputs = (
        (f23, downsample(p2, b8.down), upsample_nearest(f234)),
        (f234, downsample(f23, b16.down), upsample_nearest(f2345)),
        (f2345, downsample(f234, b32.down), c5),
    )
    fused, weights = [], []
    for xs, block in zip(inputs, params.blocks):
        y, lam = _blend(*xs, block.casf)
        fused.append(y)
        weights.append(lam)
    return FusedPyramid(f23, f234, f2345, (p2, *fused), inputs, tuple(weights))
