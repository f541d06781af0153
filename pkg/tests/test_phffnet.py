import numpy as np
import pytest

from butterfuse.config import RunConfig
from butterfuse.errors import ShapeError
from butterfuse.fafce import init_fafce_params
from butterfuse.functional import depthwise_conv2d
from butterfuse.gradchecks import run_gradcheck
from butterfuse.phffnet import (CasfParams, FuseStepParams, FusionWeights, PyramidFeatures,
                                casf_fuse, casf_weights, hierarchical_fuse_step,
                                init_casf_params, init_phff_params, phffnet_forward)
from butterfuse.tensor import Tensor, no_grad
from butterfuse.verify import casf_convexity, casf_shift_invariance, chain_order, pyramid_shapes


def _pyramid(rng, c, top):
    return PyramidFeatures(*(Tensor(rng.standard_normal((c, top // k, top // k)))
                             for k in (1, 2, 4, 8)))


def test_zero_weights_give_equal_thirds(rng):
    xs = [Tensor(rng.standard_normal((3, 4, 5))) for _ in range(3)]
    lam = casf_weights(*xs, init_casf_params(3, rng, zero=True)).lambdas.data
    np.testing.assert_allclose(lam, 1 / 3, atol=1e-15)
    np.testing.assert_allclose(casf_fuse(*xs, FusionWeights(Tensor(lam))).data,
                               sum(x.data for x in xs) / 3, atol=1e-14)


def test_one_hot_weights_select_an_input(rng):
    xs = [Tensor(rng.standard_normal((2, 3, 3))) for _ in range(3)]
    lam = np.zeros((3, 3, 3))
    lam[1] = 1.0
    np.testing.assert_array_equal(casf_fuse(*xs, FusionWeights(Tensor(lam))).data, xs[1].data)


def test_dominant_logit_selects_its_input(rng):
    xs = [Tensor(np.full((1, 2, 2), v)) for v in (1.0, 2.0, 3.0)]
    big = CasfParams((Tensor(np.zeros((1, 1, 1, 1))), Tensor(np.full((1, 1, 1, 1), 500.0)),
                      Tensor(np.zeros((1, 1, 1, 1)))))
    lam = casf_weights(*xs, big)
    np.testing.assert_allclose(casf_fuse(*xs, lam).data, 2.0, atol=1e-12)


def test_fused_output_stays_in_envelope(rng):
    for _ in range(50):
        xs = [Tensor(rng.standard_normal((2, 3, 4)) * 5) for _ in range(3)]
        y = casf_fuse(*xs, casf_weights(*xs, init_casf_params(2, rng, scale=3.0))).data
        stack = np.stack([x.data for x in xs])
        assert (y >= stack.min(axis=0) - 1e-12).all() and (y <= stack.max(axis=0) + 1e-12).all()


def test_casf_rejects_mismatched_inputs(rng):
    xs = [Tensor(np.zeros((2, 4, 4))), Tensor(np.zeros((2, 4, 4))), Tensor(np.zeros((2, 2, 2)))]
    with pytest.raises(ShapeError):
        casf_weights(*xs, init_casf_params(2, rng))
    with pytest.raises(ShapeError):
        casf_fuse(*xs[:2], xs[0], FusionWeights(Tensor(np.ones((3, 2, 2)) / 3)))


def test_fuse_step_with_zero_mixing_is_zero(rng):
    step = FuseStepParams(Tensor(rng.standard_normal((3, 3, 3))), Tensor(np.zeros((3, 6, 1, 1))))
    out = hierarchical_fuse_step(Tensor(rng.standard_normal((3, 8, 8))),
                                 Tensor(rng.standard_normal((3, 4, 4))), step)
    assert out.dims == (3, 4, 4) and not out.data.any()


def test_fuse_step_identity_blocks(rng):
    c = 2
    f, nxt = rng.standard_normal((c, 6, 4)), rng.standard_normal((c, 3, 2))
    down = rng.standard_normal((c, 3, 3))
    mix = np.zeros((c, 2 * c, 1, 1))
    mix[np.arange(c), np.arange(c)] = 1.0
    mix[np.arange(c), c + np.arange(c)] = 1.0
    out = hierarchical_fuse_step(Tensor(f), Tensor(nxt), FuseStepParams(Tensor(down), Tensor(mix)))
    want = depthwise_conv2d(Tensor(f), Tensor(down), stride=2).data + nxt
    np.testing.assert_allclose(out.data, want, atol=1e-14)


def test_fuse_step_full_size_shape(rng):
    step = init_phff_params(16, rng).steps[0]
    with no_grad():
        out = hierarchical_fuse_step(Tensor(rng.standard_normal((16, 80, 80))),
                                     Tensor(rng.standard_normal((16, 40, 40))), step)
    assert out.dims == (16, 40, 40)


def test_fuse_step_rejects_wrong_ratio(rng):
    with pytest.raises(ShapeError):
        hierarchical_fuse_step(Tensor(np.zeros((2, 8, 8))), Tensor(np.zeros((2, 3, 3))),
                               init_phff_params(2, rng).steps[0])


def test_zero_pyramid_gives_zero_outputs(rng):
    levels = PyramidFeatures(*(Tensor(np.zeros((3, s, s))) for s in (16, 8, 4, 2)))
    fused = phffnet_forward(levels, init_phff_params(3, rng, fafce=init_fafce_params(3, rng)))
    for x in (fused.f23, fused.f234, fused.f2345, *fused.head_inputs):
        assert not x.data.any()


def test_full_size_pyramid_shapes(rng):
    c = 16
    pyramid = _pyramid(rng, c, 160)
    params = init_phff_params(c, rng, fafce=init_fafce_params(c, rng))
    with no_grad():
        fused = phffnet_forward(pyramid, params)
    assert [x.dims for x in fused.head_inputs] == [(c, s, s) for s in (160, 80, 40, 20)]
    assert (fused.f23.dims, fused.f234.dims, fused.f2345.dims) == ((c, 80, 80), (c, 40, 40),
                                                                  (c, 20, 20))


def test_stride32_blend_uses_c5(rng):
    pyramid = _pyramid(rng, 2, 16)
    fused = phffnet_forward(pyramid, init_phff_params(2, rng))
    assert fused.fusion_inputs[2][2] is pyramid.c5


def test_without_fafce_stride4_is_c2(rng):
    pyramid = _pyramid(rng, 2, 16)
    assert phffnet_forward(pyramid, init_phff_params(2, rng)).head_inputs[0] is pyramid.c2


@pytest.mark.parametrize("sizes", [(16, 8, 4, 4), (16, 8, 5, 2), (16, 8, 4)])
def test_broken_pyramids_rejected(rng, sizes):
    levels = [Tensor(np.zeros((2, s, s))) for s in sizes]
    levels += [Tensor(np.zeros((3, 1, 1)))] * (4 - len(levels))
    with pytest.raises(ShapeError):
        phffnet_forward(PyramidFeatures(*levels), init_phff_params(2, rng))


def test_gradient_check():
    assert run_gradcheck("phffnet", RunConfig()).passed(1e-4)


@pytest.mark.parametrize("suite", [casf_convexity, casf_shift_invariance, chain_order,
                                   pyramid_shapes])
def test_verify_suites(suite):
    suite(np.random.default_rng(5), 200)
