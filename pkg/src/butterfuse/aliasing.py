"""Frequency folding of a sampled cosine under factor-2 subsampling."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ConfigError
from .fourier import dft_matrix


def folded_frequency(u: Fraction) -> Fraction:
    """Normalized frequency of ``cos(2 pi u h)`` after keeping every second sample."""
    f = (2 * Fraction(u)) % 1
    return min(f, 1 - f)


def dominant_bin(x: np.ndarray) -> int:
    """Strongest non-negative-frequency DFT bin of a real sequence."""
    spectrum = np.abs(dft_matrix(len(x)) @ x)
    return int(np.argmax(spectrum[: len(x) // 2 + 1]))


@dataclass(frozen=True)
class AliasReport:
    u: Fraction
    length: int
    pre_bin: int
    post_bin: int
    expected: Fraction  # folded normalized frequency after subsampling

    @property
    def expected_bin(self) -> Fraction:
        return self.expected * (self.length // 2)

    @property
    def ok(self) -> bool:
        return (self.pre_bin == round(self.u * self.length)
                and self.post_bin == round(self.expected_bin))

    def lines(self) -> list[str]:
        half = self.length // 2
        return [
            f"u = {self.u} ({float(self.u):g}), N = {self.length}",
            f"before subsampling: peak bin {self.pre_bin}/{self.length} "
            f"(frequency {self.pre_bin / self.length:g})",
            f"after subsampling:  peak bin {self.post_bin}/{half} "
            f"(frequency {self.post_bin / half:g})",
            f"fold law min(2u mod 1, 1 - (2u mod 1)) = {self.expected} "
            f"(bin {float(self.expected_bin):g}/{half})",
            f"alias law {'holds' if self.ok else 'VIOLATED'}",
        ]


def alias_demo(u: Fraction | str | float, length: int) -> AliasReport:
    if not isinstance(u, Fraction):
        try:
            u = Fraction(str(u))
        except ValueError as exc:
            raise ConfigError(f"frequency u must be a decimal number, got {u!r}") from exc
    if not 0 < u < Fraction(1, 2):
        raise ConfigError(f"frequency u must lie in (0, 0.5), got {u}")
    if length < 4 or length % 2:
        raise ConfigError(f"length N must be even and at least 4, got {length}")
    x = np.cos(2 * np.pi * float(u) * np.arange(length))
    return AliasReport(u, length, dominant_bin(x), dominant_bin(x[::2]), folded_frequency(u))
