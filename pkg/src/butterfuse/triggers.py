"""Per-pixel low-pass (damping) and high-pass (amplifier) filter banks.

Both triggers predict an ``F*F``-tap kernel at every pixel from a context map
with a 3x3 convolution followed by a softmax over the taps. The damping
kernels are used as-is (positive, summing to one) to smooth and 2x upsample
a coarse map; the amplifier kernels are ``identity - softmax`` (summing to
zero) and are added residually to a fine map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .functional import depth_to_space, softmax, space_to_depth, unfold, conv2d
from .tensor import Tensor, as_tensor, reshape, stack, tsum


@dataclass(frozen=True)
class TriggerParams:
    clfd: Tensor  # [F^2, C, 3, 3]
    chfa: Tensor  # [F_hat^2, C, 3, 3]


@dataclass(frozen=True)
class DampingKernels:
    kernels: Tensor  # [F^2, 2H, 2W], positive, sum to one over taps

    @property
    def size(self) -> int:
        return kernel_extent(self.kernels.dims[0])


@dataclass(frozen=True)
class AmplifierKernels:
    kernels: Tensor  # [F_hat^2, H_A, W_A], sum to zero over taps

    @property
    def size(self) -> int:
        return kernel_extent(self.kernels.dims[0])


def kernel_extent(taps: int) -> int:
    f = math.isqrt(taps)
    if f * f != taps or f % 2 == 0:
        raise ShapeError(f"{taps} taps is not an odd square kernel")
    return f


def identity_kernel(size: int) -> np.ndarray:
    """The ``size x size`` kernel with a single 1 at the centre."""
    e = np.zeros((size, size))
    e[size // 2, size // 2] = 1.0
    return e


def init_trigger_params(channels: int, rng: np.random.Generator, damping_size: int = 3,
                        amplifier_size: int = 3, scale: float = 0.1,
                        zero: bool = False) -> TriggerParams:
    for f in (damping_size, amplifier_size):
        if f < 1 or f % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {f}")

    def draw(taps):
        shape = (taps, channels, 3, 3)
        return Tensor(np.zeros(shape) if zero else scale * rng.standard_normal(shape))

    return TriggerParams(draw(damping_size ** 2), draw(amplifier_size ** 2))


def apply_kernels(x: Tensor, kernels: Tensor) -> Tensor:
    """``out[c,i,j] = sum_k kernels[k,i,j] * x[c, (i,j) + offset_k]`` with replicate border."""
    patches = unfold(x, kernel_extent(kernels.dims[0]), padding="replicate")
    return tsum(reshape(kernels, (kernels.dims[0], 1) + kernels.dims[1:]) * patches, axis=0)


def clfd_kernels(m: Tensor, params: TriggerParams) -> DampingKernels:
    return DampingKernels(softmax(conv2d(as_tensor(m), params.clfd), axis=0))


def clfd_apply(b: Tensor, q: DampingKernels) -> Tensor:
    """Filter ``[C, H, W]`` once per output phase and assemble ``[C, 2H, 2W]``."""
    b = as_tensor(b)
    taps, h2, w2 = q.kernels.dims
    c, h, w = b.dims
    if (h2, w2) != (2 * h, 2 * w):
        raise ShapeError(f"damping kernels are {h2}x{w2}, expected {2 * h}x{2 * w} "
                         f"for input {list(b.dims)}")
    # channel 4k + g of the rearranged bank is tap k of phase group g
    groups = reshape(space_to_depth(q.kernels), (taps, 4, h, w))
    patches = unfold(b, q.size, padding="replicate")
    outs = [tsum(reshape(groups[:, g], (taps, 1, h, w)) * patches, axis=0) for g in range(4)]
    return depth_to_space(reshape(stack(outs, axis=1), (4 * c, h, w)))


def chfa_kernels(m: Tensor, params: TriggerParams) -> AmplifierKernels:
    logits = conv2d(as_tensor(m), params.chfa)
    f = kernel_extent(logits.dims[0])
    eye = Tensor(identity_kernel(f).reshape(-1, 1, 1), dtype=logits.dtype)
    return AmplifierKernels(eye - softmax(logits, axis=0))


def chfa_apply(a: Tensor, w: AmplifierKernels) -> Tensor:
    a = as_tensor(a)
    if w.kernels.dims[1:] != a.dims[1:]:
        raise ShapeError(f"amplifier kernels are {list(w.kernels.dims[1:])}, "
                         f"input is {list(a.dims[1:])}")
    return a + apply_kernels(a, w.kernels)
