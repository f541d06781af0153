import dataclasses

import numpy as np
import pytest

from butterfuse.config import RunConfig
from butterfuse.displacement import DisplacementParams
from butterfuse.errors import ShapeError
from butterfuse.fafce import (fafce_forward, fafce_trace, init_fafce_params, preliminary_fuse,
                              project_channels, trace_summary)
from butterfuse.functional import upsample_nearest
from butterfuse.gradchecks import run_gradcheck
from butterfuse.tensor import Tensor
from butterfuse.verify import fafce_dc, fafce_gate_linearity, fafce_spectrum


def _inputs(rng, c=3, h=4, w=4):
    return Tensor(rng.standard_normal((c, 2 * h, 2 * w))), Tensor(rng.standard_normal((c, h, w)))


def test_zero_inputs_give_zero(rng):
    params = init_fafce_params(4, rng)
    out = fafce_forward(Tensor(np.zeros((4, 8, 8))), Tensor(np.zeros((4, 4, 4))), params)
    assert out.dims == (4, 8, 8) and not out.data.any()


def test_zero_parameter_constants_add(rng):
    params = init_fafce_params(2, rng, 5, 3, zero=True)
    out = fafce_forward(Tensor(np.full((2, 6, 4), 1.5)), Tensor(np.full((2, 3, 2), 2.0)), params)
    np.testing.assert_allclose(out.data, 3.5, atol=1e-12)


def test_output_keeps_fine_shape(rng):
    a, b = _inputs(rng, 16, 4, 4)
    assert fafce_forward(a, b, init_fafce_params(16, rng)).dims == (16, 8, 8)


def test_zero_displacement_reproduces_stage_one(rng):
    params = init_fafce_params(3, rng, scale=0.5)
    disp = params.displacement
    params = dataclasses.replace(
        params, displacement=DisplacementParams(Tensor(np.zeros(disp.orient.dims)), disp.scale))
    a, b = _inputs(rng)
    trace = fafce_trace(a, b, params)
    # gates are all 1, so Stage 3 repeats the Stage-1 mix on the unmoved branch
    np.testing.assert_allclose(trace.b_out.data, trace.b_initial.data, atol=1e-14)
    np.testing.assert_array_equal(trace.b_intermediate.data, trace.b_smooth.data)


def test_plain_mode_reduces_to_nearest_sum(rng):
    params = init_fafce_params(3, rng, zero=True, upsample="nearest", amplify=False)
    a, b = _inputs(rng)
    b_initial, _ = preliminary_fuse(a, b, params)
    np.testing.assert_allclose(b_initial.data, a.data + upsample_nearest(b).data, atol=1e-15)


def test_project_channels_examples(rng):
    x = rng.standard_normal((3, 2, 2))
    proj = np.zeros((2, 3, 1, 1))
    proj[0, 1] = 1.0
    proj[1, :] = 0.5
    out = project_channels(Tensor(x), Tensor(proj)).data
    np.testing.assert_allclose(out[0], x[1])
    np.testing.assert_allclose(out[1], 0.5 * x.sum(axis=0))


def test_projection_aligns_channel_widths(rng):
    params = init_fafce_params(4, rng, in_channels_a=6, in_channels_b=2)
    out = fafce_forward(Tensor(rng.standard_normal((6, 8, 8))),
                        Tensor(rng.standard_normal((2, 4, 4))), params)
    assert out.dims == (4, 8, 8)


@pytest.mark.parametrize("a_dims,b_dims", [((3, 8, 8), (3, 3, 4)), ((3, 8, 6), (3, 4, 4)),
                                           ((3, 8, 8), (2, 4, 4)), ((8, 8), (4, 4))])
def test_shape_errors(rng, a_dims, b_dims):
    with pytest.raises(ShapeError):
        fafce_forward(Tensor(np.zeros(a_dims)), Tensor(np.zeros(b_dims)),
                      init_fafce_params(3, rng))


def test_unknown_upsample_mode(rng):
    params = init_fafce_params(3, rng, upsample="bicubic")
    with pytest.raises(ValueError):
        fafce_forward(*_inputs(rng), params)


def test_shared_gates_ignore_stage_three_gates(rng):
    params = init_fafce_params(3, rng, scale=0.5, share_gates=True)
    a, b = _inputs(rng)
    moved = dataclasses.replace(params, w_a3=Tensor(np.full(3, 7.0)))
    np.testing.assert_array_equal(fafce_forward(a, b, params).data,
                                  fafce_forward(a, b, moved).data)


def test_trace_summary_reports_normalization(rng):
    trace = fafce_trace(*_inputs(rng), init_fafce_params(3, rng, scale=0.5))
    stats = trace_summary(trace)
    assert stats["damping.min"] > 0
    assert stats["damping.max_sum_error"] < 1e-12
    assert stats["amplifier.max_sum_error"] < 1e-12
    assert 0 <= stats["displacement.mean"] <= stats["displacement.max"]
    assert -1 <= stats["similarity.mean"] <= 1


def test_exhaustive_gradient_check():
    report = run_gradcheck("fafce", RunConfig(), probes=None)
    assert report.passed(1e-4), report.errors


@pytest.mark.parametrize("options", [{"upsample": "nearest"}, {"amplify": False},
                                     {"share_gates": True}, {"damping_size": 5}])
def test_gradient_check_variants(options):
    assert run_gradcheck("fafce", RunConfig(**options)).passed(1e-4)


@pytest.mark.parametrize("suite", [fafce_dc, fafce_spectrum, fafce_gate_linearity])
def test_verify_suites(suite):
    suite(np.random.default_rng(11), 200)
