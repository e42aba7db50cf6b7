import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from caunet.attention import (
    ChannelAttentionParams,
    SpatialAttentionParams,
    attention_param_count,
    cbam_block,
    channel_attention,
    effective_reduction,
    spatial_attention,
)
from caunet.errors import ConfigurationError
from caunet.tensor import Tensor, conv2d, global_pool, parameter, relu, sigmoid
from gradcheck import check_gradients
from oracles import sigmoid as np_sigmoid


def t64(a):
    return Tensor(np.asarray(a, dtype=np.float64))


def _cp(w0, w1, r):
    return ChannelAttentionParams(parameter(w0, np.float64), parameter(w1, np.float64), r)


def _sp(w7, b):
    return SpatialAttentionParams(parameter(w7, np.float64), parameter(b, np.float64))


def test_zero_weights_give_half_gates():
    f = t64(np.random.default_rng(0).standard_normal((2, 8, 5, 5)))
    mc = channel_attention(f, ChannelAttentionParams.zeros(8, 4, np.float64))
    ms = spatial_attention(f, SpatialAttentionParams.zeros(np.float64))
    np.testing.assert_array_equal(mc.data, np.full((2, 8, 1, 1), 0.5))
    np.testing.assert_array_equal(ms.data, np.full((2, 1, 5, 5), 0.5))


def test_channel_attention_identity_mlp_hand_value():
    # channel 0 spatial values (0, 2): avg 1, max 2; channel 1 (1, 5): avg 3, max 5
    f = t64(np.array([[0.0, 2.0], [1.0, 5.0]]).reshape(1, 2, 1, 2))
    eye = np.eye(2).reshape(2, 2, 1, 1)
    mc = channel_attention(f, _cp(eye, eye, 1))
    np.testing.assert_allclose(mc.data.reshape(-1), np_sigmoid(np.array([3.0, 8.0])), rtol=1e-15)


def test_channel_attention_constant_input_branches_coincide():
    rng = np.random.default_rng(1)
    cp = ChannelAttentionParams.init(4, 2, rng, np.float64)
    f = t64(np.full((1, 4, 3, 3), 0.7))
    mc = channel_attention(f, cp).data.reshape(-1)
    d = np.full(4, 0.7)
    mlp = cp.w1.data[:, :, 0, 0] @ np.maximum(cp.w0.data[:, :, 0, 0] @ d, 0)
    np.testing.assert_allclose(mc, np_sigmoid(2 * mlp), rtol=1e-14)


def test_channel_reduction_must_divide():
    with pytest.raises(ConfigurationError):
        effective_reduction(6, 4)
    assert effective_reduction(8, 16) == 8  # clamped so hidden width >= 1
    f = t64(np.ones((1, 6, 2, 2)))
    bad = _cp(np.ones((1, 6, 1, 1)), np.ones((6, 1, 1, 1)), 4)
    with pytest.raises(ConfigurationError):
        channel_attention(f, bad)


def test_spatial_attention_single_channel_descriptors_equal_input():
    x = np.random.default_rng(2).standard_normal((1, 1, 4, 4))
    w7 = np.zeros((1, 2, 7, 7))
    w7[0, 0, 3, 3] = 1.0
    w7[0, 1, 3, 3] = 1.0
    ms = spatial_attention(t64(x), _sp(w7, np.zeros(1)))
    np.testing.assert_allclose(ms.data, np_sigmoid(2 * x), rtol=1e-14)


def test_spatial_attention_single_pixel_hand_value():
    f = t64(np.array([2.0, 4.0]).reshape(1, 2, 1, 1))
    w7 = np.zeros((1, 2, 7, 7))
    w7[0, 0, 3, 3] = 1.0
    w7[0, 1, 3, 3] = 1.0
    ms = spatial_attention(f, _sp(w7, np.zeros(1)))
    assert ms.shape == (1, 1, 1, 1)
    assert ms.data.item() == pytest.approx(float(np_sigmoid(7.0)), rel=1e-15)


@pytest.mark.parametrize("dtype,tol", [(np.float32, 1e-6), (np.float64, 1e-12)])
def test_cbam_zero_weights_is_five_quarters(dtype, tol):
    f = np.random.default_rng(3).standard_normal((2, 16, 4, 4)).astype(dtype)
    out = cbam_block(Tensor(f), ChannelAttentionParams.zeros(16, 4, dtype), SpatialAttentionParams.zeros(dtype))
    np.testing.assert_allclose(out.data, 1.25 * f, rtol=tol, atol=tol)


def test_cbam_zero_input_and_shape():
    rng = np.random.default_rng(4)
    cp, sp = ChannelAttentionParams.init(8, 2, rng, np.float64), SpatialAttentionParams.init(rng, np.float64)
    out = cbam_block(t64(np.zeros((1, 8, 6, 5))), cp, sp)
    assert out.shape == (1, 8, 6, 5)
    assert not out.data.any()


def test_cbam_matches_stepwise_numpy_evaluation():
    rng = np.random.default_rng(5)
    f = rng.standard_normal((2, 8, 6, 6))
    cp, sp = ChannelAttentionParams.init(8, 2, rng, np.float64), SpatialAttentionParams.init(rng, np.float64)
    sp.bias.data[:] = 0.3
    w0, w1 = cp.w0.data[:, :, 0, 0], cp.w1.data[:, :, 0, 0]

    def mlp(d):  # d: (N, C)
        return np.maximum(d @ w0.T, 0) @ w1.T

    mc = np_sigmoid(mlp(f.mean(axis=(2, 3))) + mlp(f.max(axis=(2, 3))))[:, :, None, None]
    f1 = f * mc
    desc = np.stack([f1.mean(axis=1), f1.max(axis=1)], axis=1)
    padded = np.pad(desc, ((0, 0), (0, 0), (3, 3), (3, 3)))
    logits = np.zeros((2, 6, 6)) + 0.3
    for i in range(6):
        for j in range(6):
            logits[:, i, j] += (padded[:, :, i:i + 7, j:j + 7] * sp.w7.data[0]).sum(axis=(1, 2, 3))
    expected = f + f1 * np_sigmoid(logits)[:, None]
    np.testing.assert_allclose(cbam_block(t64(f), cp, sp).data, expected, rtol=1e-12, atol=1e-12)


def test_attention_gradients():
    rng = np.random.default_rng(6)
    f = rng.standard_normal((2, 8, 5, 5))
    w0, w1 = rng.standard_normal((4, 8, 1, 1)), rng.standard_normal((8, 4, 1, 1))
    w7, b = rng.standard_normal((1, 2, 7, 7)) * 0.3, rng.standard_normal(1)

    def ca(x, a, c):
        return channel_attention(x, ChannelAttentionParams(a, c, 2))

    def sa(x, k, bias):
        return spatial_attention(x, SpatialAttentionParams(k, bias))

    def block(x, a, c, k, bias):
        return cbam_block(x, ChannelAttentionParams(a, c, 2), SpatialAttentionParams(k, bias))

    assert max(check_gradients(ca, [f, w0, w1])) < 1e-4
    assert max(check_gradients(sa, [f, w7, b])) < 1e-4
    assert max(check_gradients(block, [f, w0, w1, w7, b])) < 1e-4


def test_attention_param_count_formula():
    assert attention_param_count(256, 16) == 2 * 256**2 // 16 + 99
    assert attention_param_count(4, 16) == 2 * 4 * 1 + 99


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (1, 4, 3, 3), elements=st.floats(-30, 30)), st.integers(0, 2**32 - 1))
def test_attention_maps_strictly_inside_unit_interval(f, seed):
    rng = np.random.default_rng(seed)
    cp, sp = ChannelAttentionParams.init(4, 2, rng, np.float64), SpatialAttentionParams.init(rng, np.float64)
    for m in (channel_attention(t64(f), cp).data, spatial_attention(t64(f), sp).data):
        assert (m > 0).all() and (m < 1).all()


@settings(max_examples=20, deadline=None)
@given(st.floats(0.01, 10), st.integers(0, 2**32 - 1))
def test_constant_input_branch_swap_symmetry(c, seed):
    rng = np.random.default_rng(seed)
    cp = ChannelAttentionParams.init(4, 2, rng, np.float64)
    f = t64(np.full((1, 4, 2, 3), c))

    def mlp(d):
        return conv2d(relu(conv2d(d, cp.w0)), cp.w1)

    swapped = sigmoid(mlp(global_pool(f, "avg")) + mlp(global_pool(f, "max")))
    np.testing.assert_array_equal(channel_attention(f, cp).data, swapped.data)
