import numpy as np
import pytest
from hypothesis import given, strategies as st

from butterfuse import oracles
from butterfuse.errors import ShapeError
from butterfuse.tensor import Tensor, grad_check_params, tsum
from butterfuse.triggers import (AmplifierKernels, DampingKernels, TriggerParams, apply_kernels,
                                 chfa_apply, chfa_kernels, clfd_apply, clfd_kernels,
                                 identity_kernel, init_trigger_params)
from butterfuse.verify import (damping_envelope, dc_contracts, kernel_normalization,
                               trigger_spectrum)


def _softmax_oracle(v):
    e = np.exp(v - v.max(axis=0))
    return e / e.sum(axis=0)


def test_zero_weights_give_uniform_damping(rng):
    p = init_trigger_params(2, rng, damping_size=5, zero=True)
    q = clfd_kernels(Tensor(rng.standard_normal((2, 4, 6))), p).kernels.data
    np.testing.assert_allclose(q, 1 / 25, atol=1e-16)


def test_damping_matches_composed_oracles(rng):
    p = init_trigger_params(3, rng, scale=0.7)
    m = rng.standard_normal((3, 4, 6))
    want = _softmax_oracle(oracles.conv2d(m, p.clfd.data))
    np.testing.assert_allclose(clfd_kernels(Tensor(m), p).kernels.data, want, atol=1e-14)


def test_clfd_rejects_channel_mismatch(rng):
    with pytest.raises(ShapeError):
        clfd_kernels(Tensor(np.zeros((4, 4, 4))), init_trigger_params(3, rng))


def test_clfd_apply_upsamples_shape(rng):
    b = Tensor(rng.standard_normal((8, 4, 4)))
    m = Tensor(rng.standard_normal((8, 8, 8)))
    assert clfd_apply(b, clfd_kernels(m, init_trigger_params(8, rng))).dims == (8, 8, 8)


def test_clfd_apply_rejects_spatial_mismatch(rng):
    q = clfd_kernels(Tensor(np.zeros((2, 6, 6))), init_trigger_params(2, rng))
    with pytest.raises(ShapeError):
        clfd_apply(Tensor(np.zeros((2, 4, 4))), q)


def test_constant_preserved_by_damping(rng):
    q = clfd_kernels(Tensor(rng.standard_normal((2, 6, 8))), init_trigger_params(2, rng, scale=2))
    out = clfd_apply(Tensor(np.full((2, 3, 4), -1.25)), q).data
    assert np.abs(out + 1.25).max() < 1e-12


def test_uniform_damping_is_box_filter_per_phase(rng):
    b = rng.standard_normal((2, 4, 5))
    q = clfd_kernels(Tensor(np.zeros((2, 8, 10))), init_trigger_params(2, rng, zero=True))
    out = clfd_apply(Tensor(b), q).data
    box = oracles.depthwise_conv2d(b, np.full((2, 3, 3), 1 / 9), padding="replicate")
    for dy in (0, 1):
        for dx in (0, 1):
            np.testing.assert_allclose(out[:, dy::2, dx::2], box, atol=1e-14)


def test_phase_groups_follow_space_to_depth_order(rng):
    # kernels that pick a different neighbour in each output phase
    b = rng.standard_normal((1, 3, 3))
    k = np.zeros((9, 6, 6))
    picks = {(0, 0): 4, (0, 1): 5, (1, 0): 7, (1, 1): 0}  # centre, right, below, up-left
    for (dy, dx), tap in picks.items():
        k[tap, dy::2, dx::2] = 1.0
    out = clfd_apply(Tensor(b), DampingKernels(Tensor(k))).data[0]
    pad = np.pad(b[0], 1, mode="edge")
    np.testing.assert_array_equal(out[0::2, 0::2], b[0])
    np.testing.assert_array_equal(out[0::2, 1::2], pad[1:-1, 2:])
    np.testing.assert_array_equal(out[1::2, 0::2], pad[2:, 1:-1])
    np.testing.assert_array_equal(out[1::2, 1::2], pad[:-2, :-2])


def test_identity_kernel():
    np.testing.assert_array_equal(identity_kernel(3), [[0, 0, 0], [0, 1, 0], [0, 0, 0]])


def test_zero_weights_amplifier_values(rng):
    w = chfa_kernels(Tensor(rng.standard_normal((2, 5, 5))),
                     init_trigger_params(2, rng, zero=True)).kernels.data
    np.testing.assert_allclose(w[4], 8 / 9, atol=1e-15)
    np.testing.assert_allclose(np.delete(w, 4, axis=0), -1 / 9, atol=1e-15)


def test_amplifier_impulse_response(rng):
    a = np.zeros((1, 5, 5))
    a[0, 2, 2] = 1.0
    w = chfa_kernels(Tensor(np.zeros((1, 5, 5))), init_trigger_params(1, rng, zero=True))
    out = chfa_apply(Tensor(a), w).data[0]
    assert abs(out[2, 2] - (1 + 8 / 9)) < 1e-15
    ring = out[1:4, 1:4].copy()
    ring[1, 1] = -1 / 9
    np.testing.assert_allclose(ring, -1 / 9, atol=1e-15)
    assert np.abs(out[0]).max() == 0


def test_amplifier_matches_stencil_oracle(rng):
    a = rng.standard_normal((2, 4, 5))
    w = rng.standard_normal((25, 4, 5))
    got = chfa_apply(Tensor(a), AmplifierKernels(Tensor(w))).data
    pad = np.pad(a, ((0, 0), (2, 2), (2, 2)), mode="edge")
    want = a.copy()
    for i in range(4):
        for j in range(5):
            for t in range(25):
                p, q = divmod(t, 5)
                want[:, i, j] += w[t, i, j] * pad[:, i + p, j + q]
    np.testing.assert_allclose(got, want, atol=1e-10)


def test_amplifier_identity_on_constants(rng):
    w = chfa_kernels(Tensor(rng.standard_normal((3, 4, 4))), init_trigger_params(3, rng, scale=3))
    out = chfa_apply(Tensor(np.full((3, 4, 4), 7.0)), w).data
    assert np.abs(out - 7).max() < 1e-10


def test_amplifier_rejects_spatial_mismatch(rng):
    w = chfa_kernels(Tensor(np.zeros((1, 4, 4))), init_trigger_params(1, rng))
    with pytest.raises(ShapeError):
        chfa_apply(Tensor(np.zeros((1, 2, 2))), w)


def test_even_kernel_size_rejected(rng):
    with pytest.raises(ValueError):
        init_trigger_params(2, rng, damping_size=4)


@given(st.integers(1, 3), st.integers(1, 4), st.integers(1, 4), st.sampled_from([1, 3, 5]),
       st.floats(0.01, 5.0), st.integers(0, 2 ** 32 - 1))
def test_kernel_invariants_property(c, h, w, f, scale, seed):
    r = np.random.default_rng(seed)
    p = init_trigger_params(c, r, f, f, scale=scale)
    m = Tensor(r.standard_normal((c, 2 * h, 2 * w)))
    q = clfd_kernels(m, p).kernels.data
    wk = chfa_kernels(m, p).kernels.data
    assert q.min() > 0 and np.abs(q.sum(axis=0) - 1).max() < 1e-7
    assert np.abs(wk.sum(axis=0)).max() < 1e-7


def test_trigger_gradients(rng):
    p = init_trigger_params(2, rng, 3, 5, scale=0.5)
    groups = {"clfd": p.clfd, "chfa": p.chfa, "m": Tensor(rng.standard_normal((2, 6, 4))),
              "a": Tensor(rng.standard_normal((2, 6, 4))), "b": Tensor(rng.standard_normal((2, 3, 2)))}
    r1, r2 = rng.standard_normal((2, 6, 4)), rng.standard_normal((2, 6, 4))

    def f(g):
        tp = TriggerParams(g["clfd"], g["chfa"])
        return (tsum(clfd_apply(g["b"], clfd_kernels(g["m"], tp)) * r1)
                + tsum(chfa_apply(g["a"], chfa_kernels(g["m"], tp)) * r2))

    assert max(grad_check_params(f, groups, eps=1e-4).values()) < 1e-4


def test_apply_kernels_window_order(rng):
    x = Tensor(np.arange(9.0).reshape(1, 3, 3))
    k = np.zeros((9, 3, 3))
    k[2] = 1.0  # offset (-1, +1)
    out = apply_kernels(x, Tensor(k)).data[0]
    assert out[1, 1] == 2.0


@pytest.mark.parametrize("suite", [kernel_normalization, dc_contracts, damping_envelope,
                                   trigger_spectrum])
def test_trigger_suites(suite):
    suite(np.random.default_rng(3), 200)
