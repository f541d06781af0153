import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from butterfuse import oracles
from butterfuse.errors import ShapeError
from butterfuse.fourier import dft2, idft2
from butterfuse.functional import (bilinear_sample, conv2d, depth_to_space, depthwise_conv2d,
                                   max_pool2d, sigmoid, silu, softmax, space_to_depth, unfold,
                                   upsample_nearest)
from butterfuse.tensor import (Tensor, _topological_order, amax, backward, clip, concat, exp,
                               grad_check, grad_check_params, log, mean, no_grad, power, sqrt,
                               stack, take, transpose, tsum)


# -- tensor basics -------------------------------------------------------------

def test_values_are_read_only():
    t = Tensor([1.0, 2.0])
    with pytest.raises(ValueError):
        t.data[0] = 5.0


def test_dims_and_dtype():
    t = Tensor(np.zeros((2, 3), dtype=np.float32))
    assert t.dims == (2, 3) and t.dtype == np.float32
    assert Tensor([1, 2]).dtype == np.float64


def test_numpy_on_the_left_defers_to_tensor():
    out = np.ones(3) * Tensor([1.0, 2.0, 3.0], requires_grad=True)
    assert isinstance(out, Tensor)


def test_broadcast_gradients_unbroadcast(rng):
    a = Tensor(rng.standard_normal((3, 1)), requires_grad=True)
    b = Tensor(rng.standard_normal((1, 4)), requires_grad=True)
    backward(tsum(a * b))
    np.testing.assert_allclose(a.grad[:, 0], b.data.sum() * np.ones(3))
    np.testing.assert_allclose(b.grad[0], a.data.sum() * np.ones(4))


def test_backward_rejects_non_scalar_root():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ShapeError):
        backward(x * 2)


def test_untouched_leaf_gets_zero_gradient():
    x = Tensor([1.0, 2.0], requires_grad=True)
    unused = Tensor([3.0], requires_grad=True)
    y = tsum(x) + tsum(unused * 0.0)
    backward(y)
    np.testing.assert_array_equal(unused.grad, [0.0])


def test_topological_order_visits_each_node_once():
    x = Tensor([1.0, -2.0], requires_grad=True)
    y = x * x
    z = tsum(y + y * x + exp(y))
    order = _topological_order(z)
    assert len(order) == len({id(n) for n in order})
    backward(z)
    xv = x.data
    np.testing.assert_allclose(x.grad, 2 * xv + 3 * xv ** 2 + 2 * xv * np.exp(xv ** 2))


def test_no_grad_builds_no_graph():
    x = Tensor([1.0], requires_grad=True)
    with no_grad():
        y = x * 3
    assert not y.requires_grad


def test_backward_sigmoid_sum_at_zero():
    x = Tensor(np.zeros(4), requires_grad=True)
    backward(tsum(sigmoid(x)))
    np.testing.assert_allclose(x.grad, [0.25] * 4, atol=1e-15)


def test_backward_softmax_sum_is_zero(rng):
    x = Tensor(rng.standard_normal(5), requires_grad=True)
    backward(tsum(softmax(x)))
    np.testing.assert_allclose(x.grad, 0.0, atol=1e-15)


def test_conv_sigmoid_composite_matches_finite_differences(rng):
    kern = Tensor(rng.standard_normal((2, 3, 3, 3)))
    x = rng.standard_normal((3, 5, 5))
    assert grad_check(lambda t: tsum(sigmoid(conv2d(t, kern))), x, eps=1e-5) < 1e-5


def test_grad_check_of_sum_is_zero(rng):
    # exact when x +- eps is representable; otherwise only rounding remains
    x = rng.integers(-5, 5, (3, 4)).astype(float)
    assert grad_check(lambda t: tsum(t), x, eps=2.0 ** -10) == 0.0
    assert grad_check(lambda t: tsum(t), rng.standard_normal((3, 4))) < 1e-9


def test_grad_check_of_square(rng):
    assert grad_check(lambda t: tsum(t * t), rng.standard_normal(6), eps=1e-5) < 1e-8


def test_grad_check_rejects_nonpositive_eps():
    with pytest.raises(ValueError):
        grad_check(lambda t: tsum(t), np.ones(2), eps=0.0)


def test_grad_check_params_skips_probes_across_kinks():
    # |x| at x=1e-6: a central difference with eps=1e-5 straddles the kink
    f = lambda p: tsum(clip(p["x"], 0.0) * 2 - p["x"])  # noqa: E731
    x = Tensor([1e-6, 0.5])
    skipped = {}
    err = grad_check_params(f, {"x": x}, eps=1e-5, skip_kinks=True, skipped=skipped)
    assert skipped == {"x": 1} and err["x"] < 1e-9
    assert grad_check_params(f, {"x": x}, eps=1e-5)["x"] > 0.1


ELEMENTWISE = {
    "exp": lambda t: exp(t * 0.5),
    "log": lambda t: log(t * t + 1.0),
    "sqrt": lambda t: sqrt(t * t + 0.5),
    "power": lambda t: power(t * t + 1.0, 1.5),
    "div": lambda t: 1.0 / (t * t + 1.0),
    "sigmoid": sigmoid,
    "silu": silu,
    "mean": lambda t: mean(t, axis=1, keepdims=True) * t,
    "amax": lambda t: amax(t, axis=0),
    "transpose": lambda t: transpose(t, (1, 0)) * np.arange(6.0).reshape(3, 2),
    "take": lambda t: take(t, (np.array([0, 1, 1]), np.array([2, 0, 2]))),
    "concat": lambda t: concat([t, t * t], axis=0),
    "stack": lambda t: stack([t, exp(t)], axis=1),
    "softmax": lambda t: softmax(t, axis=1) * np.arange(6.0).reshape(2, 3),
}


@pytest.mark.parametrize("name", sorted(ELEMENTWISE))
def test_elementwise_and_shape_op_gradients(name, rng):
    weights = rng.standard_normal(64)
    op = ELEMENTWISE[name]

    def f(t):
        out = op(t)
        return tsum(out * weights[: np.prod(out.dims)].reshape(out.dims))

    assert grad_check(f, rng.standard_normal((2, 3))) < 1e-5


# -- convolution ---------------------------------------------------------------

def test_conv_identity_kernel(rng):
    x = rng.standard_normal((1, 4, 4))
    k = np.zeros((1, 1, 3, 3))
    k[0, 0, 1, 1] = 1.0
    np.testing.assert_array_equal(conv2d(Tensor(x), Tensor(k)).data, x)


def test_conv_box_filter_matches_oracle(rng):
    x = rng.standard_normal((2, 5, 5))
    k = np.full((1, 2, 3, 3), 1 / 9)
    np.testing.assert_allclose(conv2d(Tensor(x), Tensor(k)).data, oracles.conv2d(x, k),
                               rtol=0, atol=1e-12)


def test_conv_kernel_generation_shape(rng):
    m = Tensor(rng.standard_normal((4, 6, 8)))
    assert conv2d(m, Tensor(rng.standard_normal((9, 4, 3, 3)))).dims == (9, 6, 8)


def test_conv_channel_mismatch_diagnostic():
    with pytest.raises(ShapeError, match="channel mismatch"):
        conv2d(Tensor(np.zeros((2, 4, 4))), Tensor(np.zeros((1, 3, 3, 3))))


def test_conv_rejects_even_kernel_and_bad_padding():
    with pytest.raises(ShapeError):
        conv2d(Tensor(np.zeros((1, 4, 4))), Tensor(np.zeros((1, 1, 2, 2))))
    with pytest.raises(ValueError):
        conv2d(Tensor(np.zeros((1, 4, 4))), Tensor(np.zeros((1, 1, 3, 3))), padding="wrap")


def test_depthwise_identity_and_oracle(rng):
    x = rng.standard_normal((3, 6, 6))
    eye = np.zeros((3, 3, 3))
    eye[:, 1, 1] = 1
    np.testing.assert_array_equal(depthwise_conv2d(Tensor(x), Tensor(eye)).data, x)
    k = rng.standard_normal((3, 3, 3))
    np.testing.assert_allclose(depthwise_conv2d(Tensor(x), Tensor(k), "replicate").data,
                               oracles.depthwise_conv2d(x, k, "replicate"), atol=1e-12)


def test_depthwise_stride_two_halves(rng):
    out = depthwise_conv2d(Tensor(rng.standard_normal((3, 8, 8))),
                           Tensor(rng.standard_normal((3, 3, 3))), stride=2)
    assert out.dims == (3, 4, 4)


def test_depthwise_channels_are_independent(rng):
    x = rng.standard_normal((3, 5, 5))
    k = Tensor(rng.standard_normal((3, 3, 3)))
    y = x.copy()
    y[1] += 10
    a, b = depthwise_conv2d(Tensor(x), k).data, depthwise_conv2d(Tensor(y), k).data
    np.testing.assert_array_equal(a[[0, 2]], b[[0, 2]])


def test_depthwise_channel_mismatch():
    with pytest.raises(ShapeError):
        depthwise_conv2d(Tensor(np.zeros((2, 4, 4))), Tensor(np.zeros((3, 3, 3))))


@given(st.integers(1, 3), st.integers(1, 3), st.integers(1, 6), st.integers(1, 6),
       st.sampled_from([1, 3, 5]), st.sampled_from(["zero", "replicate"]), st.integers(1, 2),
       st.integers(0, 2 ** 32 - 1))
def test_conv_matches_oracle_property(c_in, c_out, h, w, k, padding, stride, seed):
    r = np.random.default_rng(seed)
    x, kern = r.standard_normal((c_in, h, w)), r.standard_normal((c_out, c_in, k, k))
    got = conv2d(Tensor(x), Tensor(kern), padding, stride).data
    np.testing.assert_allclose(got, oracles.conv2d(x, kern, padding, stride), rtol=0, atol=1e-10)


@pytest.mark.parametrize("padding", ["zero", "replicate"])
@pytest.mark.parametrize("stride", [1, 2])
def test_conv_and_depthwise_gradients(padding, stride, rng):
    kern = rng.standard_normal((2, 3, 3, 3))
    bias = rng.standard_normal(2)
    x = rng.standard_normal((3, 5, 6))
    errs = grad_check_params(
        lambda p: tsum(conv2d(p["x"], p["k"], padding, stride, p["b"]) ** 2),
        {"x": Tensor(x), "k": Tensor(kern), "b": Tensor(bias)})
    assert max(errs.values()) < 1e-5
    dk = rng.standard_normal((3, 3, 3))
    errs = grad_check_params(lambda p: tsum(depthwise_conv2d(p["x"], p["k"], padding, stride) ** 2),
                             {"x": Tensor(x), "k": Tensor(dk)})
    assert max(errs.values()) < 1e-5


def test_unfold_and_maxpool_gradients(rng):
    x = rng.standard_normal((2, 5, 5))
    w = rng.standard_normal((9, 2, 5, 5))
    assert grad_check(lambda t: tsum(unfold(t, 3) * w), x) < 1e-5
    assert grad_check(lambda t: tsum(max_pool2d(t, 3) ** 2), x) < 1e-5


def test_unfold_window_order():
    x = Tensor(np.arange(9.0).reshape(1, 3, 3))
    patches = unfold(x, 3).data[:, 0, 1, 1]
    np.testing.assert_array_equal(patches, np.arange(9.0))


# -- softmax / sigmoid -------------------------------------------------------------

def test_softmax_values():
    np.testing.assert_allclose(softmax(Tensor([0.0, 0.0, 0.0])).data, [1 / 3] * 3, atol=1e-15)
    e = [math.exp(v) for v in (1, 2, 3)]
    want = [v / sum(e) for v in e]
    np.testing.assert_allclose(softmax(Tensor([1.0, 2.0, 3.0])).data,
                               [0.09003057, 0.24472847, 0.66524096], atol=1e-7)
    np.testing.assert_allclose(softmax(Tensor([1.0, 2.0, 3.0])).data, want, rtol=1e-14)


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=8), st.integers(0, 7),
       st.sampled_from([1000.0, -1000.0]))
def test_softmax_stable_and_normalized(values, pos, offset):
    x = np.array(values)
    x[pos % len(x)] += offset
    s = softmax(Tensor(x)).data
    assert np.isfinite(s).all() and s.min() > 0
    assert abs(s.sum() - 1) < 1e-9


def test_softmax_bad_axis():
    with pytest.raises(ShapeError):
        softmax(Tensor(np.zeros((2, 2))), axis=2)


def test_sigmoid_values(rng):
    assert sigmoid(Tensor(0.0)).item() == 0.5
    tiny = sigmoid(Tensor(-1000.0)).item()
    assert 0 < tiny <= 1e-12
    x = rng.standard_normal(20) * 5
    want = [1 / (1 + math.exp(-v)) for v in x]
    np.testing.assert_allclose(sigmoid(Tensor(x)).data, want, rtol=1e-14)


# -- rearrangement ---------------------------------------------------------------

def test_space_to_depth_layout():
    out = space_to_depth(Tensor([[[1.0, 2.0], [3.0, 4.0]]]))
    assert out.dims == (4, 1, 1)
    np.testing.assert_array_equal(out.data.ravel(), [1, 2, 3, 4])


def test_space_depth_roundtrip(rng):
    x = rng.standard_normal((8, 10, 12))
    np.testing.assert_array_equal(depth_to_space(space_to_depth(Tensor(x))).data, x)


def test_depth_to_space_assembles_groups(rng):
    groups = [rng.standard_normal((3, 2, 2)) for _ in range(4)]
    stacked = np.stack(groups, axis=1).reshape(12, 2, 2)
    out = depth_to_space(Tensor(stacked)).data
    assert out.shape == (3, 4, 4)
    np.testing.assert_array_equal(out[:, 0::2, 1::2], groups[1])
    np.testing.assert_array_equal(out[:, 1::2, 0::2], groups[2])


def test_rearrangement_rejects_bad_shapes():
    with pytest.raises(ShapeError):
        space_to_depth(Tensor(np.zeros((1, 3, 4))))
    with pytest.raises(ShapeError):
        depth_to_space(Tensor(np.zeros((6, 2, 2))))


def test_rearrangement_gradients(rng):
    w = rng.standard_normal((8, 2, 3))
    assert grad_check(lambda t: tsum(space_to_depth(t) * w), rng.standard_normal((2, 4, 6))) < 1e-9
    w2 = rng.standard_normal((2, 4, 6))
    assert grad_check(lambda t: tsum(depth_to_space(t) * w2), rng.standard_normal((8, 2, 3))) < 1e-9
    w3 = rng.standard_normal((2, 4, 6))
    assert grad_check(lambda t: tsum(upsample_nearest(t) * w3), rng.standard_normal((2, 2, 3))) < 1e-9


# -- bilinear ------------------------------------------------------------------------

def test_bilinear_nodes_and_midpoint(rng):
    x = rng.standard_normal((2, 4, 5))
    grid = np.stack(np.meshgrid(np.arange(4.0), np.arange(5.0), indexing="ij"))
    np.testing.assert_array_equal(bilinear_sample(Tensor(x), Tensor(grid)).data, x)
    mid = bilinear_sample(Tensor([[[1.0, 2.0], [3.0, 4.0]]]), Tensor(np.full((2, 1, 1), 0.5)))
    assert mid.item() == 2.5


def test_bilinear_matches_oracle_and_clamps(rng):
    x = rng.standard_normal((2, 5, 6))
    coords = np.stack([rng.uniform(-3, 8, (4, 4)), rng.uniform(-3, 9, (4, 4))])
    np.testing.assert_allclose(bilinear_sample(Tensor(x), Tensor(coords)).data,
                               oracles.bilinear_sample(x, coords), atol=1e-12)


def test_bilinear_gradient_off_lattice(rng):
    x = rng.standard_normal((2, 5, 5))
    coords = np.stack([rng.uniform(0.2, 0.8, (3, 3)) + rng.integers(0, 4, (3, 3)),
                       rng.uniform(0.2, 0.8, (3, 3)) + rng.integers(0, 4, (3, 3))])
    w = rng.standard_normal((2, 3, 3))
    errs = grad_check_params(lambda p: tsum(bilinear_sample(p["x"], p["c"]) * w),
                             {"x": Tensor(x), "c": Tensor(coords)})
    assert max(errs.values()) < 1e-6


# -- DFT -------------------------------------------------------------------------------

def test_dft_constant_is_dc_only():
    f = dft2(np.full((1, 4, 6), 2.5)).to_complex()
    assert abs(f[0, 0, 0] - 2.5) < 1e-12
    f[0, 0, 0] = 0
    assert np.abs(f).max() < 1e-12


def test_dft_roundtrip_and_parseval(rng):
    x = rng.standard_normal((2, 8, 8))
    f = dft2(x)
    assert np.abs(idft2(f).data - x).max() / np.abs(x).max() < 1e-9
    assert abs((x ** 2).sum() - 64 * (f.magnitude() ** 2).sum()) < 1e-9


def test_dft_matches_naive_oracle(rng):
    x = rng.standard_normal((1, 6, 6))
    np.testing.assert_allclose(dft2(x).to_complex(), oracles.dft2(x), rtol=0, atol=1e-12)


def test_dft_agrees_with_numpy_fft(rng):
    x = rng.standard_normal((3, 5, 7))
    np.testing.assert_allclose(dft2(x).to_complex(), np.fft.fft2(x) / 35, atol=1e-12)
