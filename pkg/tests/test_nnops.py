"""Convolution, normalization, activations, and Adam against naive oracles."""

from fractions import Fraction

import numpy as np
import pytest

from stylemix.autodiff import ShapeError, Tape, Tensor, backward, grad_check
from stylemix.nnops import (
    AdamState,
    ConvKernel,
    adam_step,
    conv2d,
    instance_norm,
    relu,
    scale_channels,
    softmax_vec,
    upsample2x,
    upsample_conv2d,
)

from oracles import adam_scalar, conv2d_loops, upsample2x_loops


def _kernel(rng, cout, cin, k=3, bias=True, stride=1, dtype=np.float32):
    w = Tensor(rng.normal(size=(cout, cin, k, k)), requires_grad=True, dtype=dtype)
    b = Tensor(rng.normal(size=(cout,)), requires_grad=True, dtype=dtype) if bias else None
    return ConvKernel(weights=w, bias=b, stride=stride)


class TestConv2d:
    def test_identity_1x1_kernel(self):
        x = Tensor(np.random.default_rng(0).normal(size=(1, 1, 5, 5)).astype(np.float32))
        k = ConvKernel(weights=Tensor(np.ones((1, 1, 1, 1), dtype=np.float32)))
        out = conv2d(x, k)
        assert np.array_equal(out.data, x.data)

    def test_all_ones_center_value(self):
        x = Tensor(np.ones((1, 1, 3, 3), dtype=np.float32))
        k = ConvKernel(weights=Tensor(np.ones((1, 1, 3, 3), dtype=np.float32)))
        out = conv2d(x, k)
        assert out.data[0, 0, 1, 1] == pytest.approx(9.0)

    def test_strided_output_shape(self):
        rng = np.random.default_rng(1)
        x = Tensor(rng.normal(size=(1, 2, 8, 8)).astype(np.float32))
        out = conv2d(x, _kernel(rng, cout=4, cin=2, stride=2))
        assert out.shape == (1, 4, 4, 4)

    def test_channel_mismatch(self):
        rng = np.random.default_rng(2)
        x = Tensor(np.zeros((1, 3, 4, 4), dtype=np.float32))
        with pytest.raises(ShapeError, match="channels"):
            conv2d(x, _kernel(rng, cout=2, cin=2))

    def test_indivisible_spatial_dims(self):
        rng = np.random.default_rng(3)
        x = Tensor(np.zeros((1, 2, 5, 5), dtype=np.float32))
        with pytest.raises(ShapeError, match="divisible"):
            conv2d(x, _kernel(rng, cout=2, cin=2, stride=2))

    def test_fractional_stride_rejected(self):
        rng = np.random.default_rng(4)
        x = Tensor(np.zeros((1, 2, 4, 4), dtype=np.float32))
        with pytest.raises(ValueError, match="upsample_conv2d"):
            conv2d(x, _kernel(rng, cout=2, cin=2, stride=Fraction(1, 2)))

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_loop_oracle_random_shapes(self, seed):
        rng = np.random.default_rng(seed)
        stride = int(rng.choice([1, 1, 2]))
        k = int(rng.choice([1, 3, 5]))
        cin = int(rng.integers(1, 4))
        cout = int(rng.integers(1, 5))
        h = stride * int(rng.integers(max(2, k // 2 + 1), 7))
        w = stride * int(rng.integers(max(2, k // 2 + 1), 7))
        x = rng.normal(size=(int(rng.integers(1, 3)), cin, h, w)).astype(np.float32)
        kern = _kernel(rng, cout, cin, k=k, stride=stride)
        out = conv2d(Tensor(x), kern)
        ref = conv2d_loops(x, kern.weights.data, kern.bias.data, stride)
        assert np.max(np.abs(out.data - ref)) / max(np.max(np.abs(ref)), 1e-6) < 1e-5


class TestUpsampleConv:
    def test_doubles_spatial_dims(self):
        rng = np.random.default_rng(5)
        x = Tensor(rng.normal(size=(1, 64, 4, 4)).astype(np.float32))
        out = upsample_conv2d(x, _kernel(rng, cout=32, cin=64, stride=Fraction(1, 2)))
        assert out.shape == (1, 32, 8, 8)

    def test_constant_input_identity_kernel(self):
        x = Tensor(np.full((1, 1, 3, 3), 2.5, dtype=np.float32))
        k = ConvKernel(weights=Tensor(np.ones((1, 1, 1, 1), dtype=np.float32)), stride=Fraction(1, 2))
        out = upsample_conv2d(x, k)
        assert out.shape == (1, 1, 6, 6)
        assert np.allclose(out.data, 2.5)

    def test_matches_composed_oracles(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(2, 3, 4, 5)).astype(np.float32)
        kern = _kernel(rng, cout=2, cin=3, stride=Fraction(1, 2))
        out = upsample_conv2d(Tensor(x), kern)
        ref = conv2d_loops(upsample2x_loops(x), kern.weights.data, kern.bias.data, 1)
        assert np.allclose(out.data, ref, atol=1e-5)

    def test_integer_stride_kernel_rejected(self):
        rng = np.random.default_rng(7)
        with pytest.raises(ValueError, match="1/2"):
            upsample_conv2d(Tensor(np.zeros((1, 2, 4, 4), dtype=np.float32)),
                            _kernel(rng, cout=2, cin=2, stride=1))


class TestInstanceNorm:
    def test_constant_channel_maps_to_zero(self):
        x = Tensor(np.full((1, 2, 4, 4), 3.0, dtype=np.float32))
        out = instance_norm(x, Tensor(np.ones(2)), Tensor(np.zeros(2)))
        assert np.allclose(out.data, 0.0, atol=1e-3)

    def test_already_standardized_values(self):
        data = np.zeros((1, 1, 2, 2), dtype=np.float32)
        data[0, 0] = [[-1.0, 1.0], [-1.0, 1.0]]
        out = instance_norm(Tensor(data), Tensor(np.ones(1)), Tensor(np.zeros(1)))
        assert np.allclose(out.data, data, atol=1e-2)

    def test_output_statistics(self):
        rng = np.random.default_rng(8)
        x = Tensor(rng.normal(2.0, 3.0, size=(2, 4, 9, 9)).astype(np.float32))
        out = instance_norm(x, Tensor(np.ones(4)), Tensor(np.zeros(4)))
        mean = out.data.mean(axis=(2, 3))
        var = out.data.var(axis=(2, 3))
        assert np.max(np.abs(mean)) < 1e-5
        assert np.max(np.abs(var - 1.0)) < 1e-3

    def test_affine_params_applied(self):
        rng = np.random.default_rng(9)
        x = Tensor(rng.normal(size=(1, 2, 6, 6)).astype(np.float32))
        out = instance_norm(x, Tensor([2.0, 0.5]), Tensor([1.0, -1.0]))
        assert out.data[:, 0].mean() == pytest.approx(1.0, abs=1e-4)
        assert out.data[:, 1].mean() == pytest.approx(-1.0, abs=1e-4)


class TestActivations:
    def test_relu_definition(self):
        out = relu(Tensor([-2.0, 0.0, 5.0]))
        assert np.array_equal(out.data, [0.0, 0.0, 5.0])

    def test_softmax_uniform(self):
        out = softmax_vec(Tensor([1.0, 1.0, 1.0, 1.0]))
        assert np.allclose(out.data, 0.25)

    def test_softmax_closed_form(self):
        out = softmax_vec(Tensor([0.0, np.log(3.0)]))
        assert np.allclose(out.data, [0.25, 0.75], atol=1e-6)

    def test_softmax_shift_invariance_and_range(self):
        rng = np.random.default_rng(10)
        x = rng.normal(size=12).astype(np.float32)
        a = softmax_vec(Tensor(x)).data
        b = softmax_vec(Tensor(x + 7.5)).data
        assert np.allclose(a, b, atol=1e-6)
        assert np.all(a > 0) and np.all(a < 1)
        assert abs(a.sum() - 1.0) < 1e-6

    def test_softmax_rejects_non_finite(self):
        with pytest.raises(FloatingPointError):
            softmax_vec(Tensor([1.0, np.nan]))


class TestScaleChannels:
    def test_scales_each_slice(self):
        x = np.ones((1, 3, 2, 2), dtype=np.float32)
        out = scale_channels(Tensor(x), Tensor([1.0, 2.0, 3.0]))
        assert np.allclose(out.data[0, 0], 1.0)
        assert np.allclose(out.data[0, 1], 2.0)
        assert np.allclose(out.data[0, 2], 3.0)

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            scale_channels(Tensor(np.zeros((1, 3, 2, 2), dtype=np.float32)), Tensor([1.0, 2.0]))


class TestAdam:
    def test_zero_gradient_leaves_params_unchanged(self):
        p = Tensor(np.array([1.0, -2.0], dtype=np.float32))
        state = AdamState.for_params([p])
        adam_step([p], [np.zeros(2, dtype=np.float32)], state, lr=0.1)
        assert np.array_equal(p.data, [1.0, -2.0])
        assert state.step_count == 1

    def test_fresh_state_accumulators_zero(self):
        p = Tensor(np.zeros(3))
        state = AdamState.for_params([p])
        assert state.step_count == 0
        assert all(np.all(m == 0) for m in state.m)
        assert all(np.all(v == 0) for v in state.v)

    def test_first_step_approximates_signed_lr(self):
        # With m_hat = g and v_hat = g^2 the first update is lr * sign(g)
        # up to the eps in the denominator.
        g = np.array([0.3, -0.7, 2.0], dtype=np.float64)
        p = Tensor(np.zeros(3, dtype=np.float64), dtype=np.float64)
        state = AdamState.for_params([p])
        adam_step([p], [g], state, lr=0.01)
        assert np.allclose(p.data, -0.01 * np.sign(g), atol=1e-6)

    def test_ten_steps_on_quadratic_match_scalar_oracle(self):
        # Minimise (theta - 3)^2 from theta = 0.
        grad_fn = lambda th: 2.0 * (th - 3.0)
        expected = adam_scalar(0.0, grad_fn, lr=0.05, steps=10)
        p = Tensor(np.array([0.0], dtype=np.float64), dtype=np.float64)
        state = AdamState.for_params([p])
        for _ in range(10):
            adam_step([p], [np.array([grad_fn(float(p.data[0]))])], state, lr=0.05)
        assert p.data[0] == pytest.approx(expected, abs=1e-6)

    def test_shape_mismatch(self):
        p = Tensor(np.zeros(3))
        state = AdamState.for_params([p])
        with pytest.raises(ShapeError):
            adam_step([p], [np.zeros(4, dtype=np.float32)], state, lr=0.1)


class TestGradients:
    """Every building block passes central finite differences in 64-bit mode."""

    def test_conv2d_grad_wrt_input(self):
        rng = np.random.default_rng(20)
        kern = _kernel(rng, cout=3, cin=2, stride=1, dtype=np.float64)
        x = Tensor(rng.normal(size=(1, 2, 4, 4)), requires_grad=True, dtype=np.float64)
        assert grad_check(lambda t: (conv2d(t, kern) * conv2d(t, kern)).sum(), x) < 1e-4

    def test_conv2d_grad_wrt_weights(self):
        rng = np.random.default_rng(21)
        x = Tensor(rng.normal(size=(2, 2, 4, 4)), dtype=np.float64)
        b = Tensor(rng.normal(size=(3,)), dtype=np.float64)
        w = Tensor(rng.normal(size=(3, 2, 3, 3)), requires_grad=True, dtype=np.float64)

        def fn(t):
            out = conv2d(x, ConvKernel(weights=t, bias=b))
            return (out * out).sum()

        assert grad_check(fn, w) < 1e-4

    def test_conv2d_strided_grad(self):
        rng = np.random.default_rng(22)
        kern = _kernel(rng, cout=2, cin=2, stride=2, dtype=np.float64)
        x = Tensor(rng.normal(size=(1, 2, 6, 6)), requires_grad=True, dtype=np.float64)
        assert grad_check(lambda t: (conv2d(t, kern) * conv2d(t, kern)).sum(), x) < 1e-4

    def test_upsample_conv_grad(self):
        rng = np.random.default_rng(23)
        kern = _kernel(rng, cout=2, cin=3, stride=Fraction(1, 2), dtype=np.float64)
        x = Tensor(rng.normal(size=(1, 3, 3, 3)), requires_grad=True, dtype=np.float64)
        assert grad_check(lambda t: (upsample_conv2d(t, kern) * upsample_conv2d(t, kern)).sum(), x) < 1e-4

    def test_instance_norm_grad_wrt_input(self):
        # The loss must break the standardization symmetry: any pure function
        # of per-channel mean/variance is constant in x up to eps.
        rng = np.random.default_rng(24)
        gam = Tensor(rng.normal(size=(3,)) + 1.5, dtype=np.float64)
        bet = Tensor(rng.normal(size=(3,)), dtype=np.float64)
        target = Tensor(rng.normal(size=(2, 3, 4, 4)), dtype=np.float64)
        x = Tensor(rng.normal(size=(2, 3, 4, 4)), requires_grad=True, dtype=np.float64)

        def fn(t):
            d = instance_norm(t, gam, bet) - target
            return (d * d).sum()

        assert grad_check(fn, x) < 1e-4

    def test_instance_norm_grad_wrt_affine(self):
        rng = np.random.default_rng(25)
        x = Tensor(rng.normal(size=(1, 3, 4, 4)), dtype=np.float64)
        bet = Tensor(rng.normal(size=(3,)), dtype=np.float64)

        def fn(t):
            out = instance_norm(x, t, bet)
            return (out * out).sum()

        gam = Tensor(rng.normal(size=(3,)) + 1.0, requires_grad=True, dtype=np.float64)
        assert grad_check(fn, gam) < 1e-4

    def test_relu_grad_away_from_kink(self):
        rng = np.random.default_rng(26)
        data = rng.normal(size=(3, 3))
        data[np.abs(data) < 0.1] += 0.2
        x = Tensor(data, requires_grad=True, dtype=np.float64)
        assert grad_check(lambda t: (relu(t) * relu(t)).sum(), x) < 1e-4

    def test_softmax_grad(self):
        rng = np.random.default_rng(27)
        x = Tensor(rng.normal(size=8), requires_grad=True, dtype=np.float64)
        ref = Tensor(rng.normal(size=8), dtype=np.float64)
        assert grad_check(lambda t: ((softmax_vec(t) - ref) * (softmax_vec(t) - ref)).sum(), x) < 1e-4

    def test_scale_channels_grad_both_sides(self):
        rng = np.random.default_rng(28)
        x64 = Tensor(rng.normal(size=(2, 3, 3, 3)), dtype=np.float64)
        w = Tensor(rng.normal(size=3), requires_grad=True, dtype=np.float64)
        assert grad_check(lambda t: (scale_channels(x64, t) * scale_channels(x64, t)).sum(), w) < 1e-4
        x = Tensor(rng.normal(size=(2, 3, 3, 3)), requires_grad=True, dtype=np.float64)
        wfix = Tensor(rng.normal(size=3), dtype=np.float64)
        assert grad_check(lambda t: (scale_channels(t, wfix) * scale_channels(t, wfix)).sum(), x) < 1e-4

    def test_upsample2x_grad(self):
        rng = np.random.default_rng(29)
        x = Tensor(rng.normal(size=(1, 2, 3, 3)), requires_grad=True, dtype=np.float64)
        assert grad_check(lambda t: (upsample2x(t) * upsample2x(t)).sum(), x) < 1e-4

    @pytest.mark.parametrize("h,w,k,s", [(1, 1, 3, 1), (1, 2, 3, 1), (2, 2, 5, 1),
                                         (2, 2, 3, 2), (1, 4, 5, 1)])
    def test_conv2d_grad_at_tiny_spatial_dims(self, h, w, k, s):
        # Interiors smaller than the padding make reflection indices repeat;
        # the gradient fold must route every pad cell back.
        rng = np.random.default_rng(31)
        kern = ConvKernel(weights=Tensor(rng.normal(size=(2, 2, k, k)), dtype=np.float64),
                          bias=Tensor(rng.normal(size=2), dtype=np.float64), stride=s)
        x = Tensor(rng.normal(size=(1, 2, h, w)), requires_grad=True, dtype=np.float64)
        assert grad_check(lambda t: (conv2d(t, kern) * conv2d(t, kern)).sum(), x) < 1e-4

    def test_composite_conv_norm_relu_mse_graph(self):
        rng = np.random.default_rng(30)
        kern = _kernel(rng, cout=2, cin=2, stride=1, dtype=np.float64)
        gam = Tensor(np.ones(2), dtype=np.float64)
        bet = Tensor(np.zeros(2), dtype=np.float64)
        target = Tensor(rng.normal(size=(1, 2, 4, 4)), dtype=np.float64)

        def fn(t):
            y = relu(instance_norm(conv2d(t, kern), gam, bet))
            d = y - target
            return (d * d).mean()

        x = Tensor(rng.normal(size=(1, 2, 4, 4)), requires_grad=True, dtype=np.float64)
        assert grad_check(fn, x) < 1e-4
