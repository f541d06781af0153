"""Toy detector: simplified backbone, the fusion neck and four box/class heads."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .fafce import init_fafce_params
from .functional import conv2d, depthwise_conv2d, max_pool2d, sigmoid, silu
from .phffnet import FusedPyramid, PhffParams, PyramidFeatures, init_phff_params, phffnet_forward
from .tensor import Tensor, amax, as_tensor, concat, exp, mean, reshape

STRIDES = (4, 8, 16, 32)


@dataclass(frozen=True)
class CbamParams:
    fc1: Tensor  # [Cr, C, 1, 1]
    b1: Tensor  # [Cr]
    fc2: Tensor  # [C, Cr, 1, 1]
    b2: Tensor  # [C]
    spatial: Tensor  # [1, 2, 7, 7]
    spatial_bias: Tensor  # [1]


@dataclass(frozen=True)
class StageParams:
    down: Tensor  # [C, 3, 3] stride-2 DWConv
    dw: Tensor  # [C, 3, 3]
    pw: Tensor  # [C, C, 1, 1]


@dataclass(frozen=True)
class BackboneParams:
    stem_conv: Tensor  # [C, 3, 3, 3], stride 2
    stem: StageParams
    stages: tuple[StageParams, StageParams, StageParams]
    sppf_proj: Tensor  # [C, 4C, 1, 1]
    cbam: CbamParams
    pool: int = 5


@dataclass(frozen=True)
class HeadParams:
    weight: Tensor  # [5B + K, C, 1, 1]
    bias: Tensor  # [5B + K]
    boxes: int = 1
    classes: int = 2


@dataclass(frozen=True)
class DetectorParams:
    backbone: BackboneParams
    neck: PhffParams
    heads: tuple[HeadParams, HeadParams, HeadParams, HeadParams]


@dataclass(frozen=True)
class HeadOutput:
    box: Tensor  # [B, 4, S, S]: x, y in (0, 1) within the cell; w, h > 0
    obj: Tensor  # [B, S, S]
    cls: Tensor  # [K, S, S]

    @property
    def grid(self) -> tuple[int, int]:
        return self.cls.dims[1:]


@dataclass(frozen=True)
class DetectorOutput:
    pyramid: PyramidFeatures
    fused: FusedPyramid
    heads: tuple[HeadOutput, ...]


def cbam(x: Tensor, params: CbamParams) -> Tensor:
    """Channel attention then spatial attention; both gates lie in (0, 1)."""
    x = as_tensor(x)
    c, h, w = x.dims

    def mlp(v):
        hidden = silu(conv2d(v, params.fc1, bias=params.b1))
        return conv2d(hidden, params.fc2, bias=params.b2)

    avg = mean(x, axis=(1, 2), keepdims=True)
    peak = reshape(amax(reshape(x, (c, h * w)), axis=1), (c, 1, 1))
    x = sigmoid(mlp(avg) + mlp(peak)) * x
    pooled = concat([mean(x, axis=0, keepdims=True), amax(x, axis=0, keepdims=True)], axis=0)
    return sigmoid(conv2d(pooled, params.spatial, bias=params.spatial_bias)) * x


def sppf(x: Tensor, k: int = 5) -> Tensor:
    """``[C, H, W] -> [4C, H, W]``: the input and three chained same-size max-pools."""
    if k % 2 == 0:
        raise ShapeError(f"pool size must be odd, got {k}")
    outs = [as_tensor(x)]
    for _ in range(3):
        outs.append(max_pool2d(outs[-1], k, padding="replicate"))
    return concat(outs, axis=0)


def _stage(x: Tensor, p: StageParams) -> Tensor:
    y = depthwise_conv2d(x, p.down, stride=2)
    return y + conv2d(silu(depthwise_conv2d(y, p.dw)), p.pw)


def backbone_forward(image: Tensor, params: BackboneParams) -> PyramidFeatures:
    image = as_tensor(image)
    if image.ndim != 3 or image.dims[0] != 3:
        raise ShapeError(f"expected an RGB image [3, H, W], got {list(image.dims)}")
    if image.dims[1] % 32 or image.dims[2] % 32:
        raise ShapeError(f"image extents {list(image.dims[1:])} must be divisible by 32")
    x = silu(conv2d(image, params.stem_conv, stride=2))
    c2 = _stage(x, params.stem)
    c3 = _stage(c2, params.stages[0])
    c4 = _stage(c3, params.stages[1])
    top = _stage(c4, params.stages[2])
    c5 = cbam(conv2d(sppf(top, params.pool), params.sppf_proj), params.cbam)
    return PyramidFeatures(c2, c3, c4, c5)


def head_forward(x: Tensor, params: HeadParams) -> HeadOutput:
    return decode_head(conv2d(x, params.weight, bias=params.bias), params.boxes)


def decode_head(raw: Tensor, boxes: int) -> HeadOutput:
    """Split ``[5B + K, S, S]`` logits into boxes, objectness and class probabilities."""
    raw = as_tensor(raw)
    nb, h, w = boxes, raw.dims[1], raw.dims[2]
    if raw.dims[0] <= 5 * nb:
        raise ShapeError(f"head output has {raw.dims[0]} channels, need more than 5B={5 * nb}")
    box = reshape(raw[: 4 * nb], (nb, 4, h, w))
    xy = sigmoid(box[:, :2])
    wh = exp(box[:, 2:])
    return HeadOutput(concat([xy, wh], axis=1), sigmoid(raw[4 * nb: 5 * nb]),
                      sigmoid(raw[5 * nb:]))


def detector_forward(image: Tensor, params: DetectorParams) -> DetectorOutput:
    pyramid = backbone_forward(image, params.backbone)
    fused = phffnet_forward(pyramid, params.neck)
    heads = tuple(head_forward(x, hp) for x, hp in zip(fused.head_inputs, params.heads))
    return DetectorOutput(pyramid, fused, heads)


# -- initialisation ---------------------------------------------------------

def _normal(rng, shape, fan_in, zero=False) -> Tensor:
    if zero:
        return Tensor(np.zeros(shape))
    return Tensor(rng.standard_normal(shape) / np.sqrt(fan_in))


def init_cbam_params(channels: int, rng: np.random.Generator, reduction: int = 4,
                     zero: bool = False) -> CbamParams:
    cr = max(1, channels // reduction)
    return CbamParams(
        fc1=_normal(rng, (cr, channels, 1, 1), channels, zero),
        b1=Tensor(np.zeros(cr)),
        fc2=_normal(rng, (channels, cr, 1, 1), cr, zero),
        b2=Tensor(np.zeros(channels)),
        spatial=_normal(rng, (1, 2, 7, 7), 2 * 49, zero),
        spatial_bias=Tensor(np.zeros(1)),
    )


def _init_stage(channels, rng, zero):
    return StageParams(_normal(rng, (channels, 3, 3), 9, zero),
                       _normal(rng, (channels, 3, 3), 9, zero),
                       Tensor(np.zeros((channels, channels, 1, 1)) if zero else
                              0.5 * rng.standard_normal((channels, channels, 1, 1))
                              / np.sqrt(channels)))


def init_backbone_params(channels: int, rng: np.random.Generator, pool: int = 5,
                         zero: bool = False) -> BackboneParams:
    return BackboneParams(
        stem_conv=_normal(rng, (channels, 3, 3, 3), 27, zero),
        stem=_init_stage(channels, rng, zero),
        stages=tuple(_init_stage(channels, rng, zero) for _ in range(3)),
        sppf_proj=_normal(rng, (channels, 4 * channels, 1, 1), 4 * channels, zero),
        cbam=init_cbam_params(channels, rng, zero=zero),
        pool=pool,
    )


def init_head_params(channels: int, classes: int, rng: np.random.Generator, boxes: int = 1,
                     zero: bool = False) -> HeadParams:
    n = 5 * boxes + classes
    weight = np.zeros((n, channels, 1, 1)) if zero else (
        0.1 * rng.standard_normal((n, channels, 1, 1)) / np.sqrt(channels))
    return HeadParams(Tensor(weight), Tensor(np.zeros(n)), boxes, classes)


def init_detector_params(channels: int, classes: int, rng: np.random.Generator, boxes: int = 1,
                         damping_size: int = 3, amplifier_size: int = 3,
                         zero: bool = False) -> DetectorParams:
    fafce = init_fafce_params(channels, rng, damping_size, amplifier_size, zero=zero)
    return DetectorParams(
        backbone=init_backbone_params(channels, rng, zero=zero),
        neck=init_phff_params(channels, rng, fafce=fafce, zero=zero),
        heads=tuple(init_head_params(channels, classes, rng, boxes, zero) for _ in STRIDES),
    )
