"""Direct (matrix) 2-D discrete Fourier transform.

Forward convention::

    A_F(u, v) = 1/(H W) * sum_{h,w} A(h, w) * exp(-2 pi j (u h / H + v w / W))

with ``u, v`` integer bin indices, so ``u / H`` is the normalized frequency.
The inverse carries no normalization. Transforms are O(N^2) per axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, as_tensor


@dataclass(frozen=True)
class ComplexTensor:
    re: np.ndarray
    im: np.ndarray

    def __post_init__(self):
        if self.re.shape != self.im.shape:
            raise ValueError(f"re/im dims differ: {self.re.shape} vs {self.im.shape}")

    @property
    def dims(self) -> tuple[int, ...]:
        return self.re.shape

    @classmethod
    def from_complex(cls, z: np.ndarray) -> "ComplexTensor":
        return cls(np.ascontiguousarray(z.real), np.ascontiguousarray(z.imag))

    def to_complex(self) -> np.ndarray:
        return self.re + 1j * self.im

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.re, self.im)


def dft_matrix(n: int, sign: int = -1) -> np.ndarray:
    """``M[u, h] = exp(sign * 2 pi j * u h / n)``; phases reduced mod n for accuracy."""
    k = np.arange(n)
    phase = np.outer(k, k) % n
    return np.exp(sign * 2j * np.pi * phase / n)


def dft2(t: Tensor | np.ndarray) -> ComplexTensor:
    """Forward transform of ``[C, H, W]`` (or ``[H, W]``) over the last two axes."""
    a = as_tensor(t).data
    h, w = a.shape[-2:]
    fh, fw = dft_matrix(h), dft_matrix(w)
    z = np.einsum("uh,...hw,vw->...uv", fh, a, fw) / (h * w)
    return ComplexTensor.from_complex(z)


def idft2(f: ComplexTensor) -> Tensor:
    """Inverse of :func:`dft2`; returns the real part."""
    z = f.to_complex()
    h, w = z.shape[-2:]
    gh, gw = dft_matrix(h, +1), dft_matrix(w, +1)
    return Tensor(np.einsum("hu,...uv,wv->...hw", gh, z, gw).real)


def normalized_frequencies(n: int) -> np.ndarray:
    """Signed normalized frequency of each bin: ``k/n`` folded into ``[-1/2, 1/2)``."""
    k = np.arange(n)
    return np.where(k < (n + 1) // 2, k, k - n) / n


def high_frequency_mask(h: int, w: int, cutoff: float = 0.25) -> np.ndarray:
    """Bins with ``|u| > cutoff`` or ``|v| > cutoff`` (the band lost under 2x subsampling)."""
    fu = np.abs(normalized_frequencies(h))[:, None]
    fv = np.abs(normalized_frequencies(w))[None, :]
    return (fu > cutoff) | (fv > cutoff)
