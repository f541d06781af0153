"""Three-stage frequency-adaptive fusion of a fine map with a 2x coarser one.

Stage 1 builds a cheap context ``M = a + up(b)``, sharpens ``a`` with the
amplifier and smooths/upsamples ``b`` with the damping kernels, then mixes
them with per-channel gates. Stage 2 predicts a displacement field from the
Stage-1 result and its neighbour similarity and resamples the upsampled
coarse branch along it. Stage 3 mixes the resampled branch with the
sharpened fine map again.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .displacement import (DisplacementField, DisplacementParams, displacement_field,
                           init_displacement_params, local_cosine_similarity, resample)
from .errors import ShapeError
from .functional import conv2d, upsample_nearest
from .tensor import Tensor, as_tensor, reshape
from .triggers import (AmplifierKernels, DampingKernels, TriggerParams, chfa_apply,
                       chfa_kernels, clfd_apply, clfd_kernels, init_trigger_params)

UPSAMPLE_MODES = ("clfd", "nearest")


@dataclass(frozen=True)
class FafceParams:
    trigger: TriggerParams
    displacement: DisplacementParams
    w_a1: Tensor
    w_b1: Tensor
    w_a3: Tensor
    w_b3: Tensor
    proj_a: Tensor | None = None  # [C, C_a, 1, 1]
    proj_b: Tensor | None = None  # [C, C_b, 1, 1]
    upsample: str = "clfd"
    amplify: bool = True
    share_gates: bool = False  # Stage 3 reuses the Stage-1 gates

    @property
    def channels(self) -> int:
        return self.w_a1.dims[0]


@dataclass(frozen=True)
class FafceTrace:
    m: Tensor
    a_sharp: Tensor
    b_smooth: Tensor
    b_initial: Tensor
    similarity: Tensor | None = None
    b_intermediate: Tensor | None = None
    b_out: Tensor | None = None
    damping: DampingKernels | None = None
    amplifier: AmplifierKernels | None = None
    displacement: DisplacementField | None = None


def init_fafce_params(channels: int, rng: np.random.Generator, damping_size: int = 3,
                      amplifier_size: int = 3, in_channels_a: int | None = None,
                      in_channels_b: int | None = None, scale: float = 0.1,
                      zero: bool = False, **options) -> FafceParams:
    """Random (or all-zero) convolution weights with every gate set to 1."""
    trigger = init_trigger_params(channels, rng, damping_size, amplifier_size, scale, zero)
    disp = init_displacement_params(channels, rng, scale, zero)

    def proj(c_in):
        if c_in is None or c_in == channels:
            return None
        return Tensor(rng.standard_normal((channels, c_in, 1, 1)) / np.sqrt(c_in))

    ones = [Tensor(np.ones(channels)) for _ in range(4)]
    return FafceParams(trigger, disp, *ones, proj_a=proj(in_channels_a),
                       proj_b=proj(in_channels_b), **options)


def project_channels(x: Tensor, proj: Tensor) -> Tensor:
    """Per-pixel linear map ``[C1, H, W] -> [C2, H, W]`` by a ``[C2, C1, 1, 1]`` kernel."""
    return conv2d(x, proj)


def _gate(w: Tensor, x: Tensor) -> Tensor:
    return reshape(w, (w.dims[0], 1, 1)) * x


def _prepare(a: Tensor, b: Tensor, params: FafceParams) -> tuple[Tensor, Tensor]:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 3 or b.ndim != 3:
        raise ShapeError(f"expected [C,2H,2W] and [C,H,W], got {list(a.dims)}, {list(b.dims)}")
    if a.dims[1:] != (2 * b.dims[1], 2 * b.dims[2]):
        raise ShapeError(f"fine map {list(a.dims)} must be exactly 2x the coarse map "
                         f"{list(b.dims)}")
    if params.upsample not in UPSAMPLE_MODES:
        raise ValueError(f"unknown upsample mode {params.upsample!r}")
    if params.proj_a is not None:
        a = project_channels(a, params.proj_a)
    if params.proj_b is not None:
        b = project_channels(b, params.proj_b)
    if a.dims[0] != b.dims[0] or a.dims[0] != params.channels:
        raise ShapeError(f"channel widths differ after projection: a={a.dims[0]}, "
                         f"b={b.dims[0]}, gates={params.channels}")
    return a, b


def preliminary_fuse(a: Tensor, b: Tensor, params: FafceParams) -> tuple[Tensor, FafceTrace]:
    a, b = _prepare(a, b, params)
    m = a + upsample_nearest(b)
    amplifier = damping = None
    if params.amplify:
        amplifier = chfa_kernels(m, params.trigger)
        a_sharp = chfa_apply(a, amplifier)
    else:
        a_sharp = a
    if params.upsample == "clfd":
        damping = clfd_kernels(m, params.trigger)
        b_smooth = clfd_apply(b, damping)
    else:
        b_smooth = upsample_nearest(b)
    b_initial = _gate(params.w_b1, b_smooth) + _gate(params.w_a1, a_sharp)
    return b_initial, FafceTrace(m=m, a_sharp=a_sharp, b_smooth=b_smooth, b_initial=b_initial,
                                 damping=damping, amplifier=amplifier)


def fafce_trace(a: Tensor, b: Tensor, params: FafceParams) -> FafceTrace:
    b_initial, trace = preliminary_fuse(a, b, params)
    s = local_cosine_similarity(b_initial)
    disp = displacement_field(b_initial, s, params.displacement)
    b_intermediate = resample(trace.b_smooth, disp)
    w_a, w_b = (params.w_a1, params.w_b1) if params.share_gates else (params.w_a3, params.w_b3)
    b_out = _gate(w_b, b_intermediate) + _gate(w_a, trace.a_sharp)
    return FafceTrace(m=trace.m, a_sharp=trace.a_sharp, b_smooth=trace.b_smooth,
                      b_initial=b_initial, similarity=s, b_intermediate=b_intermediate,
                      b_out=b_out, damping=trace.damping, amplifier=trace.amplifier,
                      displacement=disp)


def fafce_forward(a: Tensor, b: Tensor, params: FafceParams) -> Tensor:
    """Fuse fine ``a`` ``[C, 2H, 2W]`` with coarse ``b`` ``[C, H, W]``; returns ``[C, 2H, 2W]``."""
    return fafce_trace(a, b, params).b_out


def trace_summary(trace: FafceTrace) -> dict[str, float]:
    """Scalar statistics of the kernels and displacement used in one forward."""
    stats: dict[str, float] = {}
    if trace.damping is not None:
        q = trace.damping.kernels.data
        stats["damping.min"] = float(q.min())
        stats["damping.max_sum_error"] = float(np.abs(q.sum(axis=0) - 1).max())
    if trace.amplifier is not None:
        w = trace.amplifier.kernels.data
        stats["amplifier.center_mean"] = float(w[w.shape[0] // 2].mean())
        stats["amplifier.max_sum_error"] = float(np.abs(w.sum(axis=0)).max())
    if trace.displacement is not None:
        d = trace.displacement.d.data
        mag = np.hypot(d[0], d[1])
        stats["displacement.mean"] = float(mag.mean())
        stats["displacement.max"] = float(mag.max())
    if trace.similarity is not None:
        stats["similarity.mean"] = float(trace.similarity.data.mean())
    return stats
