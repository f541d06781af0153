"""Log-magnitude spectra and 8-bit binary PGM (P5) encoding."""

from __future__ import annotations

import numpy as np

from .errors import FormatError
from .fourier import dft2
from .tensor import Tensor


def log_magnitude_spectrum(t: Tensor | np.ndarray) -> np.ndarray:
    """``log(1 + |DFT|)`` per channel of ``[C, H, W]``; DC sits at pixel (0, 0)."""
    return np.log1p(dft2(t).magnitude())


def scale_channels(x: np.ndarray) -> np.ndarray:
    """Map each channel linearly onto 0..255 (min to 0, max to 255); constant channels are 0."""
    x = np.asarray(x, dtype=np.float64)
    lo = x.min(axis=(1, 2), keepdims=True)
    span = x.max(axis=(1, 2), keepdims=True) - lo
    scaled = np.where(span > 0, (x - lo) / np.where(span > 0, span, 1.0), 0.0)
    return np.rint(scaled * 255).astype(np.uint8)


def tile_vertical(channels: np.ndarray) -> np.ndarray:
    c, h, w = channels.shape
    return channels.reshape(c * h, w)


def encode_pgm(image: np.ndarray) -> bytes:
    image = np.asarray(image)
    if image.ndim != 2 or image.dtype != np.uint8:
        raise ValueError("PGM image must be a 2-D uint8 array")
    h, w = image.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + image.tobytes()


def decode_pgm(buf: bytes) -> np.ndarray:
    parts = buf.split(maxsplit=4)
    if len(parts) < 4 or parts[0] != b"P5":
        raise FormatError("not a binary PGM (P5) image")
    try:
        w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    except ValueError as exc:
        raise FormatError("bad PGM header") from exc
    if maxval != 255:
        raise FormatError(f"unsupported PGM maxval {maxval}")
    payload = parts[4] if len(parts) == 5 else b""
    if len(payload) != w * h:
        raise FormatError(f"PGM payload has {len(payload)} bytes, expected {w * h}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w)


def spectrum_pgm(t: Tensor | np.ndarray) -> bytes:
    data = np.asarray(getattr(t, "data", t), dtype=np.float64)
    if data.ndim == 2:
        data = data[None]
    if data.ndim != 3:
        raise FormatError(f"spectrum needs a [C, H, W] or [H, W] tensor, got {data.ndim} dims")
    return encode_pgm(tile_vertical(scale_channels(log_magnitude_spectrum(data))))
