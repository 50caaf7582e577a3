import numpy as np
import pytest

from jpgnet import functional as F
from jpgnet.autograd import Tensor
from jpgnet.errors import ShapeError
from jpgnet.gradcheck import grad_check
from oracles import conv_loops


class TestConv2d:
    def test_all_ones_center_and_corner(self):
        out = F.conv2d(Tensor(np.ones((1, 1, 3, 3))), Tensor(np.ones((1, 1, 3, 3))))
        expected = conv_loops(np.ones((1, 1, 3, 3)), np.ones((1, 1, 3, 3)))
        assert out.data[0, 0, 1, 1] == expected[0, 0, 1, 1] == 9
        assert out.data[0, 0, 0, 0] == expected[0, 0, 0, 0] == 4

    def test_identity_kernel(self):
        x = np.random.default_rng(0).normal(size=(2, 3, 5, 4))
        w = np.zeros((3, 3, 1, 1))
        w[np.arange(3), np.arange(3)] = 1.0
        out = F.conv2d(Tensor(x), Tensor(w), Tensor(np.zeros(3)))
        np.testing.assert_array_equal(out.data, x)

    def test_zero_weight_gives_bias(self):
        x = np.random.default_rng(1).normal(size=(1, 2, 4, 4))
        out = F.conv2d(Tensor(x), Tensor(np.zeros((3, 2, 3, 3))), Tensor(np.full(3, 0.7)))
        np.testing.assert_array_equal(out.data, 0.7)

    @pytest.mark.parametrize("stride", [1, 2])
    @pytest.mark.parametrize("k", [1, 3, 5])
    def test_matches_loop_reference(self, stride, k):
        rng = np.random.default_rng(10 * k + stride)
        x = rng.normal(size=(2, 3, 6, 8))
        w = rng.normal(size=(4, 3, k, k))
        b = rng.normal(size=4)
        out = F.conv2d(Tensor(x), Tensor(w), Tensor(b), stride=stride)
        np.testing.assert_allclose(out.data, conv_loops(x, w, b, stride), atol=1e-12)

    def test_stride2_halves(self):
        out = F.conv2d(Tensor(np.zeros((1, 1, 8, 8))), Tensor(np.zeros((1, 1, 3, 3))), stride=2)
        assert out.shape == (1, 1, 4, 4)

    def test_linear_in_x_and_w(self):
        rng = np.random.default_rng(2)
        x1, x2 = rng.normal(size=(2, 1, 2, 5, 5))
        w1, w2 = rng.normal(size=(2, 3, 2, 3, 3))
        a, b = 0.7, -1.3

        def conv(x, w):
            return F.conv2d(Tensor(x), Tensor(w)).data

        np.testing.assert_allclose(conv(a * x1 + b * x2, w1), a * conv(x1, w1) + b * conv(x2, w1), atol=1e-12)
        np.testing.assert_allclose(conv(x1, a * w1 + b * w2), a * conv(x1, w1) + b * conv(x1, w2), atol=1e-12)

    def test_channel_mismatch(self):
        with pytest.raises(ShapeError):
            F.conv2d(Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.zeros((1, 3, 3, 3))))

    @pytest.mark.parametrize("seed", range(3))
    def test_conv_relu_sum_chain_gradcheck(self, seed):
        rng = np.random.default_rng(seed)
        x = Tensor(rng.normal(size=(1, 1, 5, 5)))
        w = Tensor(rng.normal(size=(2, 1, 3, 3)))
        b = Tensor(rng.normal(size=2))
        rep = grad_check(lambda: F.relu(F.conv2d(x, w, b)).sum(), {"x": x, "w": w, "b": b}, tol=1e-4)
        assert rep.passed, rep.max_rel_error


class TestBatchnorm:
    def test_constant_channel_maps_to_zero(self):
        x = np.ones((2, 3, 4, 4)) * np.array([0.5, -2.0, 7.0])[None, :, None, None]
        out = F.batchnorm(Tensor(x), Tensor(np.ones(3)), Tensor(np.zeros(3)), eps=1e-5)
        np.testing.assert_allclose(out.data, 0.0, atol=1e-12)

    def test_standardized_input_is_fixed(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(4, 2, 6, 6))
        x = (x - x.mean(axis=(0, 2, 3), keepdims=True)) / x.std(axis=(0, 2, 3), keepdims=True)
        out = F.batchnorm(Tensor(x), Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=1e-12)
        np.testing.assert_allclose(out.data, x, atol=1e-9)

    def test_two_values(self):
        x = np.array([1.0, 3.0]).reshape(1, 1, 1, 2)
        out = F.batchnorm(Tensor(x), Tensor(np.ones(1)), Tensor(np.zeros(1)), eps=0.0)
        np.testing.assert_allclose(out.data.ravel(), [-1.0, 1.0], atol=1e-15)

    def test_running_stats_update_and_eval(self):
        rng = np.random.default_rng(3)
        x = rng.normal(2.0, 3.0, size=(4, 2, 5, 5))
        rm, rv = np.zeros(2), np.ones(2)
        F.batchnorm(Tensor(x), Tensor(np.ones(2)), Tensor(np.zeros(2)), rm, rv, training=True, momentum=0.1)
        np.testing.assert_allclose(rm, 0.1 * x.mean(axis=(0, 2, 3)))
        np.testing.assert_allclose(rv, 0.9 + 0.1 * x.var(axis=(0, 2, 3), ddof=1))
        out = F.batchnorm(Tensor(x), Tensor(np.ones(2)), Tensor(np.zeros(2)), rm, rv, training=False)
        expected = (x - rm[None, :, None, None]) / np.sqrt(rv[None, :, None, None] + 1e-5)
        np.testing.assert_allclose(out.data, expected)

    def test_zero_size_channel(self):
        with pytest.raises(ShapeError):
            F.batchnorm(Tensor(np.zeros((0, 2, 3, 3))), Tensor(np.ones(2)), Tensor(np.zeros(2)))

    @pytest.mark.parametrize("training,per_instance", [(True, False), (False, False), (True, True)])
    def test_gradcheck(self, training, per_instance):
        rng = np.random.default_rng(4)
        x = Tensor(rng.normal(size=(2, 3, 3, 3)))
        g = Tensor(rng.uniform(0.5, 1.5, size=3))
        b = Tensor(rng.normal(size=3))
        rm, rv = rng.normal(size=3), rng.uniform(0.5, 2, size=3)
        wts = rng.normal(size=(2, 3, 3, 3))

        def f():
            return (F.batchnorm(x, g, b, rm.copy(), rv.copy(), training=training, per_instance=per_instance) * wts).sum()

        rep = grad_check(f, {"x": x, "gamma": g, "beta": b})
        assert rep.passed, rep.max_rel_error


class TestActivations:
    def test_relu(self):
        np.testing.assert_array_equal(F.relu(Tensor(np.array([-1.0, 0.0, 2.0]))).data, [0, 0, 2])
        assert not F.relu(Tensor(-np.arange(1.0, 5.0))).data.any()

    def test_leaky(self):
        np.testing.assert_allclose(F.leaky_relu(Tensor(np.array([-1.0])), 0.1).data, [-0.1])

    def test_sigmoid_range_and_extremes(self):
        out = F.sigmoid(Tensor(np.array([-800.0, 0.0, 800.0]))).data
        assert out[1] == 0.5 and 0 <= out[0] < 1e-300 and out[2] == 1.0


class TestUpsample:
    def test_constant(self):
        out = F.upsample_bilinear_x2(Tensor(np.full((1, 2, 3, 5), 0.3)))
        assert out.shape == (1, 2, 6, 10)
        np.testing.assert_allclose(out.data, 0.3, atol=1e-15)

    def test_single_pixel(self):
        out = F.upsample_bilinear_x2(Tensor(np.full((1, 1, 1, 1), 0.8)))
        np.testing.assert_array_equal(out.data, np.full((1, 1, 2, 2), 0.8))

    def test_row_values(self):
        out = F.upsample_bilinear_x2(Tensor(np.array([[[[0.0, 1.0]]]])))
        np.testing.assert_allclose(out.data[0, 0, 0], [0, 1 / 3, 2 / 3, 1], atol=1e-15)
        np.testing.assert_allclose(out.data[0, 0, 1], [0, 1 / 3, 2 / 3, 1], atol=1e-15)


class TestConcat:
    def test_channels(self):
        a = Tensor(np.random.default_rng(0).normal(size=(1, 3, 4, 4)))
        b = Tensor(np.zeros((1, 27, 4, 4)))
        out = F.concat_channels(a, b)
        assert out.shape[1] == 30
        np.testing.assert_array_equal(out.data[:, 0], a.data[:, 0])

    def test_empty_and_roundtrip(self):
        a = Tensor(np.random.default_rng(1).normal(size=(2, 3, 4, 4)))
        np.testing.assert_array_equal(F.concat_channels(a, Tensor(np.zeros((2, 0, 4, 4)))).data, a.data)
        b = Tensor(np.ones((2, 5, 4, 4)))
        np.testing.assert_array_equal(F.slice_channels(F.concat_channels(a, b), 0, 3).data, a.data)

    def test_spatial_mismatch(self):
        with pytest.raises(ShapeError):
            F.concat_channels(Tensor(np.zeros((1, 1, 4, 4))), Tensor(np.zeros((1, 1, 4, 5))))
