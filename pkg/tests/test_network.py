import numpy as np
import pytest

from caunet.errors import ConfigurationError, DimensionError
from caunet.network import Conv, NetworkConfig, UpConv, build, expected_shapes, param_count
from caunet.tensor import Tensor
from gradcheck import check_model_gradients


def layer_sum_oracle(cfg: NetworkConfig, r_eff: int | None = None) -> int:
    """Closed-form trainable-scalar count from the layer schedule."""
    total = 0
    c_in = cfg.in_channels
    for level in range(cfg.depth + 1):
        c = cfg.base_channels * 2**level
        total += (9 * c_in * c + c) + (9 * c * c + c) + 2 * c
        c_in = c
    if cfg.attention:
        C = c_in
        r = r_eff or min(cfg.reduction_ratio, C)
        total += 2 * C * C // r + 2 * 7 * 7 + 1
    for level in range(cfg.depth, 0, -1):
        c = cfg.base_channels * 2**level
        half = c // 2
        total += (c * half * 4 + half) + (9 * c * half + half) + (9 * half * half + half)
    total += cfg.base_channels * cfg.out_channels + cfg.out_channels
    return total


def test_same_seed_bitwise_identical():
    a, b = build(NetworkConfig(depth=2), 7), build(NetworkConfig(depth=2), 7)
    for (ka, ta), (kb, tb) in zip(a.named_parameters().items(), b.named_parameters().items()):
        assert ka == kb
        np.testing.assert_array_equal(ta.data, tb.data)
    c = build(NetworkConfig(depth=2), 8)
    assert not np.array_equal(a.named_parameters()["enc0.conv1.weight"].data, c.named_parameters()["enc0.conv1.weight"].data)


def test_init_biases_zero_bn_affine_identity():
    net = build(NetworkConfig(depth=2), 0)
    for name, t in net.named_parameters().items():
        if name.endswith("bias") or name.endswith("bn.beta"):
            assert not t.data.any(), name
        if name.endswith("bn.gamma"):
            assert (t.data == 1).all()


def test_first_conv_kaiming_variance():
    variances = [build(NetworkConfig(depth=1), s).named_parameters()["enc0.conv1.weight"].data.var() for s in range(100)]
    expected = 2 / (3 * 3 * 3)
    assert abs(np.mean(variances) - expected) <= 0.2 * expected


def test_single_conv_param_count():
    conv = Conv(3, 16, 3, np.random.default_rng(0), np.float32, padding=1)
    assert sum(t.size for t in conv.tensors().values()) == 16 * 27 + 16 == 448


def test_upconv_rejects_odd_channels():
    with pytest.raises(ConfigurationError):
        UpConv(5, np.random.default_rng(0), np.float32)


@pytest.mark.parametrize("depth", [1, 2, 3, 4])
def test_param_count_matches_layer_sum(depth):
    cfg = NetworkConfig(depth=depth)
    assert param_count(build(cfg, 0)) == layer_sum_oracle(cfg)


def test_param_count_seed_independent():
    assert param_count(build(NetworkConfig(depth=3), 1)) == param_count(build(NetworkConfig(depth=3), 2))


def test_default_param_count_reported():
    # default depth-4 / base-16 reading of the architecture
    assert param_count(build(NetworkConfig(), 0)) == layer_sum_oracle(NetworkConfig()) == 1_950_388


@pytest.mark.parametrize("depth", [2, 3, 4])
def test_attention_ablation_delta(depth):
    with_att = param_count(build(NetworkConfig(depth=depth), 0))
    without = param_count(build(NetworkConfig(depth=depth, attention=False), 0))
    C = 16 * 2**depth
    assert with_att - without == 2 * C * C // 16 + 99


def test_forward_shape_and_range():
    net = build(NetworkConfig(depth=2), 0)
    x = Tensor(np.random.default_rng(1).random((2, 3, 16, 32), dtype=np.float32))
    y = net.forward(x)
    assert y.shape == (2, 1, 16, 32)
    assert ((y.data > 0) & (y.data < 1)).all()


def test_eval_forward_deterministic():
    net = build(NetworkConfig(depth=2), 0)
    x = Tensor(np.random.default_rng(1).random((1, 3, 16, 16), dtype=np.float32))
    np.testing.assert_array_equal(net.forward(x).data, net.forward(x).data)


def test_depth4_bottleneck_shape_on_64px():
    net = build(NetworkConfig(depth=4), 0)
    net.forward(Tensor(np.random.default_rng(2).random((1, 3, 64, 64), dtype=np.float32)))
    shapes = dict(net.last_shapes)
    assert shapes["enc4"] == (1, 256, 4, 4)
    assert shapes["attention"] == (1, 256, 4, 4)
    assert net.last_shapes == expected_shapes(net.config, 1, 64, 64)


@pytest.mark.parametrize("depth,hw", [(1, (8, 6)), (2, (16, 32)), (3, (24, 16))])
def test_intermediate_shapes_follow_closed_form(depth, hw):
    net = build(NetworkConfig(depth=depth, base_channels=4, reduction_ratio=2), 0)
    net.forward(Tensor(np.zeros((1, 3, *hw), dtype=np.float32)))
    assert net.last_shapes == expected_shapes(net.config, 1, *hw)


def test_indivisible_resolution_names_multiple():
    net = build(NetworkConfig(depth=2), 0)
    with pytest.raises(DimensionError, match="multiple of 4"):
        net.forward(Tensor(np.zeros((1, 3, 18, 16), dtype=np.float32)))


def test_training_forward_uses_dropblock_schedule():
    cfg = NetworkConfig(depth=1, base_channels=4, reduction_ratio=2, dropblock_block_size=3)
    assert cfg.dropblock_prob(0.0) == 0.05
    assert cfg.dropblock_prob(1.0) == pytest.approx(0.25)
    assert cfg.dropblock_prob(0.5) == pytest.approx(0.15)
    net = build(cfg, 0)
    x = Tensor(np.random.default_rng(0).random((2, 3, 8, 8), dtype=np.float32))
    a = net.forward(x, training=True, epoch_fraction=1.0, rng=np.random.default_rng(5)).data
    b = net.forward(x, training=True, epoch_fraction=1.0, rng=np.random.default_rng(5)).data
    np.testing.assert_array_equal(a, b)
    with pytest.raises(ConfigurationError):
        net.forward(x, training=True, rng=None)


def test_state_dict_roundtrip():
    a, b = build(NetworkConfig(depth=2), 1), build(NetworkConfig(depth=2), 2)
    a.encoders[0].bn.running_mean[:] = 0.5
    b.load_state_dict(a.state_dict())
    x = Tensor(np.random.default_rng(0).random((1, 3, 8, 8), dtype=np.float32))
    np.testing.assert_array_equal(a.forward(x).data, b.forward(x).data)


def test_end_to_end_gradient_check_depth2():
    cfg = NetworkConfig(depth=2, dropblock_prob_start=0.0, dropblock_prob_end=0.0)
    net = build(cfg, 3, dtype=np.float64)
    rng = np.random.default_rng(4)
    for blk in net.encoders:  # non-trivial eval statistics
        blk.bn.running_mean[:] = rng.normal(0, 0.1, blk.bn.running_mean.shape)
        blk.bn.running_var[:] = rng.uniform(0.5, 1.5, blk.bn.running_var.shape)
    x = Tensor(rng.random((1, 3, 16, 16)), requires_grad=True)
    params = {"input": x, **net.named_parameters()}
    errors = check_model_gradients(lambda: net.forward(x, training=False), params, probes=4)
    worst = max(errors, key=errors.get)
    assert errors[worst] < 1e-4, (worst, errors[worst])
