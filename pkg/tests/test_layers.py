"""Layer forward oracles, adjoint identities, and finite-difference checks."""

import numpy as np
import pytest

from wavedae.layers import (
    BatchNorm,
    Conv1d,
    Dropout,
    DwtLayer,
    Elu,
    IdwtLayer,
    TransposeConv1d,
    gradient_check,
)
from wavedae.wavelet import dwt_step, make_db6_filters


def same_padding(length_in, kernel, stride):
    total = (length_in // stride - 1) * stride + kernel - length_in
    return total // 2, total - total // 2


def naive_conv1d(x, w, bias, stride):
    """Direct triple-loop summation over batch, position, kernel, channels."""
    batch, length_in, c_in = x.shape
    kernel, _, c_out = w.shape
    left, right = same_padding(length_in, kernel, stride)
    xp = np.pad(x, ((0, 0), (left, right), (0, 0)))
    length_out = length_in // stride
    y = np.zeros((batch, length_out, c_out))
    for b in range(batch):
        for t in range(length_out):
            for o in range(c_out):
                acc = bias[o]
                for k in range(kernel):
                    for c in range(c_in):
                        acc += w[k, c, o] * xp[b, stride * t + k, c]
                y[b, t, o] = acc
    return y


def naive_tconv1d(x, w, bias, stride):
    """Scatter-accumulate adjoint of naive_conv1d; w is (K, out, in)."""
    batch, length_in, c_in = x.shape
    kernel, c_out, _ = w.shape
    length_out = length_in * stride
    left, _right = same_padding(length_out, kernel, stride)
    y = np.zeros((batch, length_out, c_out))
    for b in range(batch):
        for t in range(length_in):
            for k in range(kernel):
                pos = stride * t + k - left
                if not 0 <= pos < length_out:
                    continue
                for o in range(c_out):
                    for c in range(c_in):
                        y[b, pos, o] += x[b, t, c] * w[k, o, c]
    return y + bias


class TestConv1d:
    def test_table_row_shape(self):
        conv = Conv1d(1, 40, kernel=16, stride=2)
        y = conv.forward(np.zeros((3, 1024, 1)))
        assert y.shape == (3, 512, 40)

    def test_identity_kernel(self):
        conv = Conv1d(1, 1, kernel=1, stride=1)
        conv.weights[0, 0, 0] = 1.0
        x = np.random.default_rng(0).standard_normal((2, 16, 1))
        np.testing.assert_array_equal(conv.forward(x), x)

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((1, 8, 2))
        for stride in (1, 2):
            conv = Conv1d(2, 3, kernel=4, stride=stride)
            conv.weights[...] = rng.standard_normal(conv.weights.shape)
            conv.bias[...] = rng.standard_normal(3)
            np.testing.assert_allclose(
                conv.forward(x),
                naive_conv1d(x, conv.weights, conv.bias, stride),
                atol=1e-12,
            )

    def test_rejects_channel_mismatch(self):
        conv = Conv1d(2, 3, kernel=4, stride=2)
        with pytest.raises(ValueError):
            conv.forward(np.zeros((1, 8, 3)))

    def test_rejects_non_divisible_length(self):
        conv = Conv1d(1, 1, kernel=4, stride=2)
        with pytest.raises(ValueError):
            conv.forward(np.zeros((1, 9, 1)))

    def test_zero_cotangent_gives_zero_grads(self):
        rng = np.random.default_rng(2)
        conv = Conv1d(2, 3, kernel=4, stride=2)
        conv.init(rng)
        y = conv.forward(rng.standard_normal((2, 8, 2)))
        gx = conv.backward(np.zeros_like(y))
        assert not gx.any()
        assert not conv.grads()["weights"].any()
        assert not conv.grads()["bias"].any()

    def test_backward_linearity(self):
        rng = np.random.default_rng(3)
        conv = Conv1d(2, 3, kernel=4, stride=2)
        conv.init(rng)
        x = rng.standard_normal((2, 8, 2))
        g = rng.standard_normal((2, 4, 3))
        conv.forward(x)
        conv.zero_grads()
        gx1 = conv.backward(g)
        gw1 = conv.grads()["weights"].copy()
        conv.forward(x)
        conv.zero_grads()
        gx2 = conv.backward(2.0 * g)
        np.testing.assert_array_equal(gx2, 2.0 * gx1)
        np.testing.assert_array_equal(conv.grads()["weights"], 2.0 * gw1)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(4)
        conv = Conv1d(2, 3, kernel=4, stride=2)
        conv.init(rng)
        assert gradient_check(conv, rng.standard_normal((1, 8, 2)), seed=4) < 1e-4


class TestTransposeConv1d:
    def test_table_row_shape(self):
        tconv = TransposeConv1d(20, 40, kernel=16, stride=2)
        y = tconv.forward(np.zeros((3, 512, 20)))
        assert y.shape == (3, 1024, 40)

    def test_adjoint_identity(self):
        rng = np.random.default_rng(5)
        conv = Conv1d(3, 4, kernel=6, stride=2)
        conv.weights[...] = rng.standard_normal(conv.weights.shape)
        tconv = TransposeConv1d(4, 3, kernel=6, stride=2)
        tconv.weights[...] = conv.weights.transpose(0, 1, 2)
        x = rng.standard_normal((2, 12, 3))
        y = rng.standard_normal((2, 6, 4))
        lhs = np.sum(conv.forward(x) * y)
        rhs = np.sum(x * tconv.forward(y))
        assert abs(lhs - rhs) < 1e-10

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((1, 5, 2))
        for stride in (1, 2):
            tconv = TransposeConv1d(2, 3, kernel=4, stride=stride)
            tconv.weights[...] = rng.standard_normal(tconv.weights.shape)
            tconv.bias[...] = rng.standard_normal(3)
            np.testing.assert_allclose(
                tconv.forward(x),
                naive_tconv1d(x, tconv.weights, tconv.bias, stride),
                atol=1e-12,
            )

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(7)
        tconv = TransposeConv1d(2, 3, kernel=4, stride=2)
        tconv.init(rng)
        assert gradient_check(tconv, rng.standard_normal((1, 6, 2)), seed=7) < 1e-4


class TestBatchNorm:
    def test_train_mode_normalizes(self):
        # input variance large enough that the epsilon=1e-3 floor stays
        # below the 1e-6 tolerance on the output variance
        rng = np.random.default_rng(8)
        bn = BatchNorm(3)
        y = bn.forward(rng.standard_normal((4, 16, 3)) * 200 + 2, train=True)
        np.testing.assert_allclose(y.mean(axis=(0, 1)), 0.0, atol=1e-10)
        np.testing.assert_allclose(y.var(axis=(0, 1)), 1.0, atol=1e-6)

    def test_infer_mode_uses_running_stats(self):
        bn = BatchNorm(2)
        x = np.random.default_rng(9).standard_normal((2, 8, 2))
        np.testing.assert_allclose(
            bn.forward(x, train=False), x / np.sqrt(1.0 + bn.epsilon), atol=1e-12
        )

    def test_running_stats_blend(self):
        rng = np.random.default_rng(10)
        bn = BatchNorm(2, momentum=0.9)
        x = rng.standard_normal((4, 8, 2)) + 3.0
        bn.forward(x, train=True)
        expected = 0.9 * np.zeros(2) + 0.1 * x.mean(axis=(0, 1))
        np.testing.assert_allclose(bn.running_mean, expected, atol=1e-12)

    def test_rejects_single_sample_training(self):
        bn = BatchNorm(2)
        with pytest.raises(ValueError):
            bn.forward(np.zeros((1, 1, 2)), train=True)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(11)
        bn = BatchNorm(3)
        bn.gamma[...] = rng.uniform(0.5, 1.5, 3)
        bn.beta[...] = rng.uniform(-1, 1, 3)
        x = rng.standard_normal((2, 8, 3))
        assert gradient_check(bn, x, seed=11, train=True) < 1e-4
        assert gradient_check(bn, x, seed=11, train=False) < 1e-4


class TestEluAndDropout:
    def test_elu_values(self):
        elu = Elu()
        x = np.array([[[-50.0], [0.0], [2.0]]])
        y = elu.forward(x)
        np.testing.assert_allclose(y[0, :, 0], [-1.0, 0.0, 2.0], atol=1e-12)

    def test_elu_gradient_away_from_kink(self):
        rng = np.random.default_rng(12)
        x = rng.uniform(0.1, 2.0, (1, 16, 2)) * rng.choice([-1.0, 1.0], (1, 16, 2))
        assert gradient_check(Elu(), x, seed=12) < 1e-6

    def test_dropout_infer_is_identity(self):
        x = np.random.default_rng(13).standard_normal((2, 8, 2))
        drop = Dropout(0.1)
        np.testing.assert_array_equal(drop.forward(x, train=False), x)

    def test_dropout_preserves_mean(self):
        drop = Dropout(0.1, rng=np.random.default_rng(14))
        x = np.ones((1, 1000, 1000))
        y = drop.forward(x, train=True)
        assert abs(y.mean() - 1.0) < 0.01

    def test_dropout_mask_reproducible(self):
        x = np.random.default_rng(15).standard_normal((2, 64, 4))
        a = Dropout(0.3, rng=np.random.default_rng(99)).forward(x, train=True)
        b = Dropout(0.3, rng=np.random.default_rng(99)).forward(x, train=True)
        np.testing.assert_array_equal(a, b)

    def test_dropout_fixed_mask_gradient(self):
        rng = np.random.default_rng(16)
        drop = Dropout(0.4)
        x = rng.standard_normal((1, 8, 2))
        drop.fixed_mask = rng.random(x.shape) >= 0.4
        assert gradient_check(drop, x, seed=16, train=True) < 1e-6


class TestDwtLayer:
    def test_table_row_shape(self):
        layer = DwtLayer(20, 20, kernel=8)
        y = layer.forward(np.zeros((2, 256, 20)))
        assert y.shape == (2, 128, 20)

    def test_constant_input_detail_branch_is_bias_only(self):
        rng = np.random.default_rng(17)
        layer = DwtLayer(2, 4, kernel=3)
        layer.init(rng)
        layer.hp_conv.bias[...] = rng.standard_normal(2)
        x = np.ones((1, 32, 2)) * 1.7
        y = layer.forward(x)
        np.testing.assert_allclose(
            y[..., :2], np.broadcast_to(layer.hp_conv.bias, y[..., :2].shape),
            atol=1e-12,
        )

    def test_rejects_odd_length(self):
        with pytest.raises(ValueError):
            DwtLayer(2, 4).forward(np.zeros((1, 15, 2)))

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(18)
        layer = DwtLayer(2, 4, kernel=3)
        layer.init(rng)
        assert gradient_check(layer, rng.standard_normal((1, 16, 2)), seed=18) < 1e-4


class TestIdwtLayer:
    def test_table_row_shape(self):
        layer = IdwtLayer(40, 20, kernel=8)
        y = layer.forward(np.zeros((2, 128, 40)))
        assert y.shape == (2, 256, 20)

    def test_single_channel_bottleneck_input(self):
        layer = IdwtLayer(1, 40, kernel=8)
        y = layer.forward(np.zeros((2, 32, 1)))
        assert y.shape == (2, 64, 40)

    def test_zero_input_zero_bias_gives_zero(self):
        layer = IdwtLayer(4, 3, kernel=5)
        layer.hp_tconv.weights[...] = 1.0
        layer.lp_tconv.weights[...] = 1.0
        y = layer.forward(np.zeros((1, 16, 4)))
        np.testing.assert_array_equal(y, np.zeros_like(y))

    def test_rejects_odd_channels(self):
        with pytest.raises(ValueError):
            IdwtLayer(3, 4)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(19)
        layer = IdwtLayer(4, 3, kernel=3)
        layer.init(rng)
        assert gradient_check(layer, rng.standard_normal((1, 8, 4)), seed=19) < 1e-4


class TestWaveletLayerComposition:
    def test_identity_branches_give_perfect_reconstruction(self):
        channels = 3
        down = DwtLayer(channels, 2 * channels, kernel=1)
        up = IdwtLayer(2 * channels, channels, kernel=1)
        eye = np.eye(channels)
        down.hp_conv.weights[0] = eye
        down.lp_conv.weights[0] = eye
        up.hp_tconv.weights[0] = eye
        up.lp_tconv.weights[0] = eye
        x = np.random.default_rng(20).uniform(-1, 1, (2, 64, channels))
        np.testing.assert_allclose(up.forward(down.forward(x)), x, atol=1e-8)

    def test_dwt_layer_splits_frequencies_like_wavelet_core(self):
        # with single-tap identity branches the layer output equals the
        # per-channel wavelet step itself
        bank = make_db6_filters()
        layer = DwtLayer(1, 2, kernel=1, bank=bank)
        layer.hp_conv.weights[0, 0, 0] = 1.0
        layer.lp_conv.weights[0, 0, 0] = 1.0
        x = np.random.default_rng(21).uniform(-1, 1, 32)
        y = layer.forward(x[None, :, None])
        approx, detail = dwt_step(x, bank)
        np.testing.assert_allclose(y[0, :, 0], detail, atol=1e-12)
        np.testing.assert_allclose(y[0, :, 1], approx, atol=1e-12)


class TestGradientSuite:
    """Every layer kind passes finite-difference checks over 10 seeds."""

    @pytest.mark.parametrize("seed", range(10))
    def test_all_layer_kinds(self, seed):
        rng = np.random.default_rng(seed)

        conv = Conv1d(2, 3, kernel=4, stride=2)
        conv.init(rng)
        tconv = TransposeConv1d(2, 3, kernel=4, stride=2)
        tconv.init(rng)
        bn = BatchNorm(2)
        bn.gamma[...] = rng.uniform(0.5, 1.5, 2)
        drop = Dropout(0.3)
        drop.fixed_mask = rng.random((1, 8, 2)) >= 0.3
        dwt = DwtLayer(2, 4, kernel=3)
        dwt.init(rng)
        idwt = IdwtLayer(2, 3, kernel=3)
        idwt.init(rng)

        x = rng.standard_normal((1, 8, 2))
        x_elu = np.sign(x) * (0.1 + np.abs(x))
        assert gradient_check(conv, x, seed=seed) < 1e-4
        assert gradient_check(tconv, x, seed=seed) < 1e-4
        assert gradient_check(bn, x, seed=seed, train=True) < 1e-4
        assert gradient_check(Elu(), x_elu, seed=seed) < 1e-4
        assert gradient_check(drop, x, seed=seed, train=True) < 1e-4
        assert gradient_check(dwt, rng.standard_normal((1, 16, 2)), seed=seed) < 1e-4
        assert gradient_check(idwt, x, seed=seed) < 1e-4
