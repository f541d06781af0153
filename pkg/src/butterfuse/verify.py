"""Invariant suites and oracle-equivalence sweeps shared by the CLI and the tests.

Each suite takes a generator and a case count, raises :class:`VerificationFailure`
naming the violated property, and otherwise returns a one-line summary.
"""

from __future__ import annotations

import dataclasses
import math
import time
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterator, Mapping

import numpy as np

from . import functional, oracles
from .detect import (HeadOutput, cbam, detector_forward, init_cbam_params,
                     init_detector_params)
from .displacement import local_cosine_similarity, resample
from .errors import ShapeError
from .fafce import fafce_forward, fafce_trace, init_fafce_params
from .fourier import dft2, high_frequency_mask, idft2
from .functional import (bilinear_sample, conv2d, depth_to_space, depthwise_conv2d, softmax,
                         space_to_depth)
from .losses import (LossWeights, dfl_focal_loss, detection_loss, parse_ground_truth,
                     total_loss)
from .phffnet import (PyramidFeatures, casf_fuse, casf_weights, init_casf_params,
                      init_phff_params, phffnet_forward)
from .tensor import Tensor, no_grad
from .triggers import (chfa_apply, chfa_kernels, clfd_apply, clfd_kernels,
                       init_trigger_params)

ORACLE_RTOL = 1e-9


class VerificationFailure(AssertionError):
    pass


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def _require(ok, message: str) -> None:
    if not ok:
        raise VerificationFailure(message)


def _rel_err(got: np.ndarray, want: np.ndarray) -> float:
    got, want = np.asarray(got), np.asarray(want)
    if got.shape != want.shape:
        return math.inf
    if got.size == 0:
        return 0.0
    return float(np.abs(got - want).max() / max(1.0, float(np.abs(want).max())))


@contextmanager
def injected_faults(faults: Mapping[str, float]) -> Iterator[None]:
    """Temporarily perturb ops through the functional test hook."""
    saved = dict(functional._FAULTS)
    functional._FAULTS.update(faults)
    try:
        yield
    finally:
        functional._FAULTS.clear()
        functional._FAULTS.update(saved)


# -- oracle equivalence ------------------------------------------------------

def oracle_conv2d(rng: np.random.Generator, cases: int) -> str:
    worst = 0.0
    for n in range(cases):
        c_in, c_out = rng.integers(1, 4, size=2)
        h, w = rng.integers(1, 9, size=2)
        k = int(rng.choice([1, 3, 5, 7]))
        padding = str(rng.choice(functional.PADDING_MODES))
        stride = int(rng.integers(1, 3))
        x = rng.standard_normal((c_in, h, w))
        kern = rng.standard_normal((c_out, c_in, k, k))
        bias = rng.standard_normal(c_out) if rng.random() < 0.5 else None
        got = conv2d(Tensor(x), Tensor(kern), padding, stride,
                     None if bias is None else Tensor(bias)).data
        err = _rel_err(got, oracles.conv2d(x, kern, padding, stride, bias))
        _require(err <= ORACLE_RTOL, f"conv2d differs from oracle by {err:.3g} at case {n} "
                                     f"(x {x.shape}, k {k}, {padding}, stride {stride})")
        worst = max(worst, err)
    return f"{cases} cases, max rel err {worst:.2e}"


def oracle_depthwise(rng: np.random.Generator, cases: int) -> str:
    worst = 0.0
    for n in range(cases):
        c = int(rng.integers(1, 5))
        h, w = rng.integers(1, 9, size=2)
        k = int(rng.choice([1, 3, 5, 7]))
        padding = str(rng.choice(functional.PADDING_MODES))
        stride = int(rng.integers(1, 3))
        x = rng.standard_normal((c, h, w))
        kern = rng.standard_normal((c, k, k))
        got = depthwise_conv2d(Tensor(x), Tensor(kern), padding, stride).data
        err = _rel_err(got, oracles.depthwise_conv2d(x, kern, padding, stride))
        _require(err <= ORACLE_RTOL, f"depthwise_conv2d differs from oracle by {err:.3g} "
                                     f"at case {n}")
        worst = max(worst, err)
    return f"{cases} cases, max rel err {worst:.2e}"


def oracle_bilinear(rng: np.random.Generator, cases: int) -> str:
    worst = 0.0
    for n in range(cases):
        c = int(rng.integers(1, 4))
        h, w, ho, wo = rng.integers(1, 9, size=4)
        x = rng.standard_normal((c, h, w))
        coords = np.stack([rng.uniform(-2, h + 1, (ho, wo)), rng.uniform(-2, w + 1, (ho, wo))])
        if rng.random() < 0.2:
            coords = np.round(coords)  # exact lattice points and edges
        got = bilinear_sample(Tensor(x), Tensor(coords)).data
        err = _rel_err(got, oracles.bilinear_sample(x, coords))
        _require(err <= ORACLE_RTOL, f"bilinear_sample differs from oracle by {err:.3g} "
                                     f"at case {n}")
        worst = max(worst, err)
    return f"{cases} cases, max rel err {worst:.2e}"


def oracle_dft2(rng: np.random.Generator, cases: int) -> str:
    worst = 0.0
    for n in range(cases):
        c = int(rng.integers(1, 4))
        h, w = rng.integers(1, 9, size=2)
        x = rng.standard_normal((c, h, w))
        got = dft2(Tensor(x)).to_complex()
        err = _rel_err(got, oracles.dft2(x))
        _require(err <= ORACLE_RTOL, f"dft2 differs from oracle by {err:.3g} at case {n}")
        worst = max(worst, err)
    return f"{cases} cases, max rel err {worst:.2e}"


# -- tensor-core invariants --------------------------------------------------

def softmax_sum_to_one(rng: np.random.Generator, cases: int) -> str:
    worst = 0.0
    for _ in range(cases):
        shape = tuple(rng.integers(1, 6, size=int(rng.integers(1, 4))))
        axis = int(rng.integers(0, len(shape)))
        x = rng.standard_normal(shape) * rng.choice([1.0, 30.0, 1000.0])
        s = softmax(Tensor(x), axis=axis).data
        _require(np.isfinite(s).all() and (s > 0).all(),
                 "softmax.sum_to_one: non-finite or non-positive output")
        worst = max(worst, float(np.abs(s.sum(axis=axis) - 1).max()))
        _require(worst < 1e-12, f"softmax.sum_to_one: sums deviate from 1 by {worst:.3g}")
    return f"{cases} cases, max |sum-1| {worst:.1e}"


def rearrange_roundtrip(rng: np.random.Generator, cases: int) -> str:
    for _ in range(cases):
        c, h, w = rng.integers(1, 5, size=3)
        x = rng.standard_normal((c, 2 * h, 2 * w))
        y = space_to_depth(Tensor(x))
        _require(y.dims == (4 * c, h, w), f"space_to_depth dims {y.dims}")
        _require(np.array_equal(depth_to_space(y).data, x), "depth_to_space(space_to_depth(x)) != x")
        _require(np.array_equal(y.data[4 * (c - 1) + 3], x[c - 1, 1::2, 1::2]),
                 "space_to_depth channel order is not 4c + 2dy + dx")
    return f"{cases} cases bit-exact"


def dft_roundtrip(rng: np.random.Generator, cases: int) -> str:
    worst = 0.0
    for _ in range(cases):
        h, w = rng.integers(1, 9, size=2)
        x = rng.standard_normal((2, h, w))
        f = dft2(Tensor(x))
        worst = max(worst, _rel_err(idft2(f).data, x))
        energy = (x ** 2).sum()
        parseval = abs(energy - h * w * (f.magnitude() ** 2).sum()) / max(1.0, energy)
        _require(worst < 1e-10 and parseval < 1e-10,
                 f"dft round trip err {worst:.3g}, Parseval err {parseval:.3g}")
    return f"{cases} cases, max round-trip err {worst:.1e}"


# -- triggers ---------------------------------------------------------------

def _random_trigger_case(rng):
    c = int(rng.integers(1, 5))
    h, w = rng.integers(1, 7, size=2)
    f, fh = (int(v) for v in rng.choice([1, 3, 5], size=2))
    params = init_trigger_params(c, rng, f, fh, scale=float(rng.choice([0.1, 1.0, 3.0])))
    m = Tensor(rng.standard_normal((c, 2 * h, 2 * w)))
    return c, h, w, params, m


def kernel_normalization(rng: np.random.Generator, cases: int) -> str:
    worst_q = worst_w = 0.0
    for n in range(cases):
        _, _, _, params, m = _random_trigger_case(rng)
        q = clfd_kernels(m, params).kernels.data
        wk = chfa_kernels(m, params).kernels.data
        _require((q > 0).all(), f"damping kernels not strictly positive at case {n}")
        worst_q = max(worst_q, float(np.abs(q.sum(axis=0) - 1).max()))
        worst_w = max(worst_w, float(np.abs(wk.sum(axis=0)).max()))
        _require(worst_q < 1e-7, f"damping kernels sum to 1 only within {worst_q:.3g}")
        _require(worst_w < 1e-7, f"amplifier kernels sum to 0 only within {worst_w:.3g}")
        centre = wk.shape[0] // 2
        off = np.delete(wk, centre, axis=0)
        if wk.shape[0] > 1:
            # strict in exact arithmetic; a dominant tap saturates the softmax to 0 or 1
            _require(((wk[centre] >= 0) & (wk[centre] <= 1)).all() and
                     ((off >= -1) & (off <= 0)).all(),
                     f"amplifier kernel entries outside their sign bands at case {n}")
    return f"{cases} cases, max |sum-1| {worst_q:.1e}, max |sum| {worst_w:.1e}"


def dc_contracts(rng: np.random.Generator, cases: int) -> str:
    worst = 0.0
    for _ in range(cases):
        c, h, w, params, m = _random_trigger_case(rng)
        level = rng.uniform(-5, 5, size=(c, 1, 1))
        b = Tensor(np.broadcast_to(level, (c, h, w)).copy())
        a = Tensor(np.broadcast_to(level, (c, 2 * h, 2 * w)).copy())
        up = clfd_apply(b, clfd_kernels(m, params)).data
        sharp = chfa_apply(a, chfa_kernels(m, params)).data
        worst = max(worst, float(np.abs(up - level).max()), float(np.abs(sharp - level).max()))
        _require(worst < 1e-10, f"constant input moved by {worst:.3g}")
    return f"{cases} cases, max deviation {worst:.1e}"


def damping_envelope(rng: np.random.Generator, cases: int) -> str:
    for n in range(cases):
        _, h, w, params, m = _random_trigger_case(rng)
        c = m.dims[0]
        b = rng.standard_normal((c, h, w))
        q = clfd_kernels(m, params)
        out = clfd_apply(Tensor(b), q).data
        r = q.size // 2
        padded = np.pad(b, ((0, 0), (r, r), (r, r)), mode="edge")
        for i in range(h):
            for j in range(w):
                hood = padded[:, i: i + 2 * r + 1, j: j + 2 * r + 1].reshape(c, -1)
                block = out[:, 2 * i: 2 * i + 2, 2 * j: 2 * j + 2].reshape(c, -1)
                lo, hi = hood.min(axis=1)[:, None], hood.max(axis=1)[:, None]
                _require(((block >= lo - 1e-12) & (block <= hi + 1e-12)).all(),
                         f"damped output leaves its neighbourhood envelope at case {n}")
    return f"{cases} cases within neighbourhood min/max"


def trigger_spectrum(rng: np.random.Generator, cases: int) -> str:
    """Uniform damping never raises high-band energy; the 3x3 amplifier residual has no DC.

    A circular box filter attenuates every bin separately. The replicate
    border leaks a little energy between bins (even out of an empty band), so
    the damping check bounds the total high-band energy of sinusoids that lie
    in the high band.
    """
    worst = 0.0
    for n in range(cases):
        h, w = (2 * int(v) for v in rng.integers(1, 5, size=2))
        high = np.argwhere(high_frequency_mask(h, w))
        ku, kv = (int(v) for v in high[rng.integers(0, len(high))])
        rows, cols = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
        b = np.cos(2 * np.pi * (ku * rows / h + kv * cols / w) + rng.uniform(0, 2 * np.pi))[None]
        f = int(rng.choice([1, 3, 5]))
        zero = init_trigger_params(1, rng, f, 3, zero=True)
        m = Tensor(np.zeros((1, 2 * h, 2 * w)))
        smooth = clfd_apply(Tensor(b), clfd_kernels(m, zero)).data
        # uniform kernels give the same box filter in all four output phases
        boxed = smooth[:, ::2, ::2]
        _require(np.array_equal(np.repeat(np.repeat(boxed, 2, 1), 2, 2), smooth),
                 f"uniform damping phases differ at case {n}")
        band = high_frequency_mask(h, w)
        before = (dft2(b).magnitude()[0][band] ** 2).sum()
        after = (dft2(boxed).magnitude()[0][band] ** 2).sum()
        _require(after <= before * (1 + 1e-12) + 1e-30,
                 f"uniform damping raised high-band energy at case {n} "
                 f"(k=({ku},{kv}), F={f}: {before:.3g} -> {after:.3g})")
        if before > 1e-20:
            worst = max(worst, after / before)
        a = b + rng.standard_normal((1, h, w))
        residual = chfa_apply(Tensor(a), chfa_kernels(Tensor(np.zeros((1, h, w))), zero)).data - a
        dc = abs(dft2(residual).to_complex()[0, 0, 0])
        _require(dc < 1e-9, f"amplifier residual has DC {dc:.3g} at case {n}")
    return f"{cases} sinusoids, max high-band energy ratio {worst:.3f}"


# -- displacement ------------------------------------------------------------

def similarity_bounds(rng: np.random.Generator, cases: int) -> str:
    for n in range(cases):
        c = int(rng.integers(1, 5))
        h, w = rng.integers(1, 8, size=2)
        m = rng.standard_normal((c, h, w))
        m[:, rng.random((h, w)) < 0.1] = 0.0
        s = local_cosine_similarity(Tensor(m)).data
        _require(s.shape == (8, h, w), f"similarity dims {s.shape}")
        _require((np.abs(s) <= 1 + 1e-12).all(), f"similarity outside [-1, 1] at case {n}")
        # s[k] at p equals s[7-k] at the neighbour (interior pixels)
        for k, (a, b) in enumerate(((-1, -1), (-1, 0), (-1, 1), (0, -1))):
            inner = s[k, 1:h - 1, 1:w - 1]
            mirror = s[7 - k, 1 + a: h - 1 + a, 1 + b: w - 1 + b]
            _require(np.allclose(inner, mirror, atol=1e-12),
                     f"similarity not symmetric between neighbours at case {n}")
    return f"{cases} cases"


def resample_identity(rng: np.random.Generator, cases: int) -> str:
    for n in range(cases):
        c = int(rng.integers(1, 4))
        h, w = rng.integers(1, 8, size=2)
        x = rng.standard_normal((c, h, w))
        same = resample(Tensor(x), Tensor(np.zeros((2, h, w)))).data
        _require(np.abs(same - x).max() < 1e-12, f"zero displacement is not identity at case {n}")
        dr, dc = (int(v) for v in rng.integers(-2, 3, size=2))
        shifted = resample(Tensor(x), Tensor(np.stack([np.full((h, w), dr),
                                                       np.full((h, w), dc)]).astype(float))).data
        rows = np.clip(np.arange(h) + dr, 0, h - 1)
        cols = np.clip(np.arange(w) + dc, 0, w - 1)
        _require(np.abs(shifted - x[:, rows][:, :, cols]).max() < 1e-12,
                 f"integer displacement is not a clamped shift at case {n}")
    return f"{cases} cases"


# -- fafce / phffnet ---------------------------------------------------------

def fafce_dc(rng: np.random.Generator, cases: int) -> str:
    worst = 0.0
    for _ in range(cases):
        c = int(rng.integers(1, 5))
        h, w = rng.integers(1, 5, size=2)
        params = init_fafce_params(c, rng, *(int(v) for v in rng.choice([1, 3, 5], size=2)),
                                   zero=True)
        ca, cb = rng.uniform(-3, 3, size=2)
        out = fafce_forward(Tensor(np.full((c, 2 * h, 2 * w), ca)),
                            Tensor(np.full((c, h, w), cb)), params).data
        _require(out.shape == (c, 2 * h, 2 * w), f"fafce output dims {out.shape}")
        worst = max(worst, float(np.abs(out - (ca + cb)).max()))
        _require(worst < 1e-10, f"zero-parameter fusion of constants off by {worst:.3g}")
    return f"{cases} cases, max deviation {worst:.1e}"


def fafce_spectrum(rng: np.random.Generator, cases: int) -> str:
    """A high-band sinusoid in the fine map is never weakened by the amplifier."""
    worst_bin = worst_band = math.inf
    for n in range(cases):
        c = int(rng.integers(1, 4))
        h, w = (2 * int(v) for v in rng.integers(2, 5, size=2))
        params = init_fafce_params(c, rng, 3, int(rng.choice([3, 5])),
                                   scale=float(rng.choice([0.1, 1.0, 3.0])))
        band = high_frequency_mask(2 * h, 2 * w)
        ku, kv = (int(v) for v in np.argwhere(band)[rng.integers(0, int(band.sum()))])
        rows, cols = np.meshgrid(np.arange(2 * h), np.arange(2 * w), indexing="ij")
        wave = np.cos(2 * np.pi * (ku * rows / (2 * h) + kv * cols / (2 * w))
                      + rng.uniform(0, 2 * np.pi))
        a = Tensor(wave * rng.uniform(0.5, 2, (c, 1, 1)))
        b = Tensor(np.zeros((c, h, w)))
        on = dft2(fafce_forward(a, b, params)).magnitude()
        off = dft2(fafce_forward(a, b, dataclasses.replace(params, amplify=False))).magnitude()
        for u, v in ((ku, kv), ((-ku) % (2 * h), (-kv) % (2 * w))):
            _require((on[:, u, v] >= off[:, u, v] - 1e-12).all(),
                     f"amplifier weakened the injected bin ({u},{v}) at case {n}")
            worst_bin = min(worst_bin, float((on[:, u, v] / off[:, u, v]).min()))
        ratio = float((on[:, band] ** 2).sum() / (off[:, band] ** 2).sum())
        _require(ratio >= 1 - 1e-12, f"amplifier reduced high-band energy at case {n}")
        worst_band = min(worst_band, ratio)
    return f"{cases} draws, min injected-bin gain {worst_bin:.3f}, min band gain {worst_band:.3f}"


def fafce_gate_linearity(rng: np.random.Generator, cases: int) -> str:
    worst = 0.0
    for _ in range(min(cases, 100)):
        c = int(rng.integers(1, 4))
        h, w = rng.integers(1, 4, size=2)
        params = init_fafce_params(c, rng, scale=0.5)
        a, b = Tensor(rng.standard_normal((c, 2 * h, 2 * w))), Tensor(rng.standard_normal((c, h, w)))
        trace = fafce_trace(a, b, params)
        s = float(rng.uniform(-3, 3))
        scaled = dataclasses.replace(params, w_a3=Tensor(s * params.w_a3.data))
        diff = fafce_forward(a, b, scaled).data - trace.b_out.data
        want = (s - 1) * params.w_a3.data[:, None, None] * trace.a_sharp.data
        worst = max(worst, float(np.abs(diff - want).max()))
        _require(worst < 1e-10, f"scaling the Stage-3 gate is not linear (err {worst:.3g})")
    return f"{min(cases, 100)} cases, max err {worst:.1e}"


def casf_convexity(rng: np.random.Generator, cases: int) -> str:
    worst = 0.0
    for n in range(cases):
        c = int(rng.integers(1, 5))
        h, w = rng.integers(1, 7, size=2)
        params = init_casf_params(c, rng, scale=float(rng.choice([0.1, 1.0, 10.0])))
        xs = [Tensor(rng.standard_normal((c, h, w)) * rng.uniform(0.1, 10)) for _ in range(3)]
        lam = casf_weights(*xs, params)
        y = casf_fuse(*xs, lam).data
        ld = lam.lambdas.data
        _require((ld >= 0).all(), f"negative fusion weight at case {n}")
        worst = max(worst, float(np.abs(ld.sum(axis=0) - 1).max()))
        _require(worst < 1e-7, f"fusion weights sum to 1 only within {worst:.3g}")
        stack = np.stack([x.data for x in xs])
        _require((y >= stack.min(axis=0) - 1e-12).all() and (y <= stack.max(axis=0) + 1e-12).all(),
                 f"fused output leaves the per-pixel input envelope at case {n}")
    return f"{cases} cases, max |sum-1| {worst:.1e}"


def casf_shift_invariance(rng: np.random.Generator, cases: int) -> str:
    worst = 0.0
    for _ in range(cases):
        logits = rng.standard_normal((3, 4, 5)) * 5
        shift = float(rng.uniform(-100, 100))
        a = softmax(Tensor(logits), axis=0).data
        b = softmax(Tensor(logits + shift), axis=0).data
        worst = max(worst, float(np.abs(a - b).max()))
        _require(worst < 1e-9, f"fusion weights moved by {worst:.3g} under a common logit shift")
    return f"{cases} cases, max change {worst:.1e}"


def chain_order(rng: np.random.Generator, cases: int) -> str:
    for n in range(min(cases, 20)):
        c, s = int(rng.integers(1, 4)), 2 * int(rng.integers(1, 3))
        params = init_phff_params(c, rng, fafce=init_fafce_params(c, rng))
        levels = [rng.standard_normal((c, s * 8 // k, s * 8 // k)) for k in (1, 2, 4, 8)]
        full = phffnet_forward(PyramidFeatures(*map(Tensor, levels)), params)
        levels[3] = np.zeros_like(levels[3])
        cut = phffnet_forward(PyramidFeatures(*map(Tensor, levels)), params)
        _require(np.array_equal(full.f23.data, cut.f23.data) and
                 np.array_equal(full.f234.data, cut.f234.data),
                 f"F23/F234 depend on C5 at case {n}")
    return f"{min(cases, 20)} pyramids"


def pyramid_shapes(rng: np.random.Generator, cases: int) -> str:
    for n in range(min(cases, 20)):
        c = int(rng.integers(1, 4))
        s = 2 * int(rng.integers(1, 4))
        params = init_phff_params(c, rng, fafce=init_fafce_params(c, rng))
        levels = [Tensor(rng.standard_normal((c, s * 8 // k, s * 8 // k))) for k in (1, 2, 4, 8)]
        with no_grad():
            fused = phffnet_forward(PyramidFeatures(*levels), params)
        _require(tuple(x.dims for x in fused.head_inputs) == tuple(x.dims for x in levels),
                 f"fused pyramid dims differ from input levels at case {n}")
        for lam in fused.fusion_weights:
            _require(np.abs(lam.lambdas.data.sum(axis=0) - 1).max() < 1e-7,
                     f"CASF weights not normalised inside the pyramid at case {n}")
        try:
            phffnet_forward(PyramidFeatures(levels[0], levels[0], levels[2], levels[3]), params)
        except ShapeError:
            pass
        else:
            raise VerificationFailure("pyramid with a broken stride chain was accepted")
    return f"{min(cases, 20)} pyramids"


# -- detector and losses -----------------------------------------------------

def shape_contract(rng: np.random.Generator, cases: int) -> str:
    params = init_detector_params(8, 2, rng)
    with no_grad():
        out = detector_forward(Tensor(rng.uniform(0, 1, (3, 640, 640))), params)
    grids = [h.grid for h in out.heads]
    _require(grids == [(160, 160), (80, 80), (40, 40), (20, 20)],
             f"640x640 input produced head grids {grids}")
    for h in out.heads:
        _require(h.box.dims[:2] == (1, 4) and h.cls.dims[0] == 2 and h.obj.dims[0] == 1,
                 "head output channel layout is wrong")
    return "4 heads at strides 4/8/16/32"


def cbam_bounds(rng: np.random.Generator, cases: int) -> str:
    for n in range(min(cases, 50)):
        c = int(rng.integers(1, 6))
        x = rng.standard_normal((c, 5, 5)) * 10
        y = cbam(Tensor(x), init_cbam_params(c, rng)).data
        _require((np.abs(y) <= np.abs(x) + 1e-12).all() and (np.sign(y) * np.sign(x) >= 0).all(),
                 f"attention gates left (0, 1) at case {n}")
    return f"{min(cases, 50)} cases"


def _hand_head(box, cls_probs, grid=1, boxes=1):
    box = np.asarray(box, float).reshape(boxes, 4, grid, grid)
    cls = np.asarray(cls_probs, float).reshape(-1, grid, grid)
    return HeadOutput(Tensor(box), Tensor(np.full((boxes, grid, grid), 0.5)), Tensor(cls))


def loss_semantics(rng: np.random.Generator, cases: int) -> str:
    gt = parse_ground_truth("S=1 B=1 K=2\n0 0 0.5 0.5 0.16 0.49 0\n")
    perfect = detection_loss(_hand_head([0.5, 0.5, 0.16, 0.49], [1.0, 0.0]), gt).values()
    _require(max(perfect.values()) < 1e-6, f"perfect prediction has loss {perfect}")

    parts = detection_loss(_hand_head([0.6, 0.4, 0.25, 0.36], [0.8, 0.3]), gt).values()
    focal = -(0.25 * 0.2 ** 2 * math.log(0.8) + 0.75 * 0.3 ** 2 * math.log(0.7))
    want = {"iou": 0.01 + 0.01 + 0.01 + 0.01, "cls": 0.2 ** 2 + 0.3 ** 2, "dfl": focal}
    want["total"] = 7.5 * want["iou"] + 0.5 * want["cls"] + 1.5 * want["dfl"]
    for key, value in want.items():
        _require(abs(parts[key] - value) < 1e-12,
                 f"single-box {key} loss {parts[key]!r} != hand value {value!r}")

    weights = LossWeights()
    for _ in range(cases):
        i, c, d = rng.uniform(0, 10, size=3)
        total = total_loss(Tensor(i), Tensor(c), Tensor(d), weights).total.item()
        _require(total == 7.5 * i + 0.5 * c + 1.5 * d, "total is not 7.5 iou + 0.5 cls + 1.5 dfl")

    p = rng.uniform(0.01, 0.99, size=(4, 3))
    y = np.eye(3)[rng.integers(0, 3, size=4)]
    by_hand = -np.sum(y * 0.25 * (1 - p) ** 2 * np.log(p)
                      + (1 - y) * 0.75 * p ** 2 * np.log(1 - p))
    _require(abs(dfl_focal_loss(Tensor(p), y).item() - by_hand) < 1e-12,
             "focal loss disagrees with its closed form")
    return f"hand cases + {cases} weighted totals"


Suite = Callable[[np.random.Generator, int], str]

SUITES: dict[str, Suite] = {
    "oracle.conv2d": oracle_conv2d,
    "oracle.depthwise": oracle_depthwise,
    "oracle.bilinear": oracle_bilinear,
    "oracle.dft2": oracle_dft2,
    "softmax.sum_to_one": softmax_sum_to_one,
    "rearrange.roundtrip": rearrange_roundtrip,
    "dft.roundtrip_parseval": dft_roundtrip,
    "triggers.kernel_normalization": kernel_normalization,
    "triggers.dc_contracts": dc_contracts,
    "triggers.damping_envelope": damping_envelope,
    "triggers.spectrum": trigger_spectrum,
    "displacement.similarity": similarity_bounds,
    "displacement.resample": resample_identity,
    "fafce.dc": fafce_dc,
    "fafce.spectrum": fafce_spectrum,
    "fafce.gate_linearity": fafce_gate_linearity,
    "casf.convexity": casf_convexity,
    "casf.shift_invariance": casf_shift_invariance,
    "phffnet.chain_order": chain_order,
    "phffnet.shapes": pyramid_shapes,
    "detect.shape_contract": shape_contract,
    "detect.cbam_bounds": cbam_bounds,
    "loss.semantics": loss_semantics,
}


def suite_rng(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng([seed, list(SUITES).index(name)])


def run_suite(name: str, seed: int = 0, cases: int = 100) -> SuiteResult:
    start = time.perf_counter()
    try:
        detail = SUITES[name](suite_rng(seed, name), cases)
        passed = True
    except VerificationFailure as exc:
        detail, passed = str(exc), False
    except (ArithmeticError, ValueError) as exc:
        detail, passed = f"{type(exc).__name__}: {exc}", False
    return SuiteResult(name, passed, detail, time.perf_counter() - start)


def run_suites(seed: int = 0, cases: int = 100, names=None,
               faults: Mapping[str, float] = ()) -> list[SuiteResult]:
    with injected_faults(dict(faults)):
        return [run_suite(name, seed, cases) for name in (names or SUITES)]
