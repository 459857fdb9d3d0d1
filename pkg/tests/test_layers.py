import numpy as np
import pytest
from numpy.testing import assert_allclose

from tcnformer.autodiff import Tensor, finite_diff_grad, grad_check_error, tensor_sum, mul
from tcnformer.errors import ContractError, ShapeError
from tcnformer.layers import (
    BatchNorm1d,
    CausalConv1d,
    Dense,
    Dropout,
    LayerNorm,
    causal_dilated_conv1d,
    dense,
    uniform_init,
)


def _conv(x, w, b, d=1):
    return causal_dilated_conv1d(Tensor(x), Tensor(w), Tensor(b), d)


class TestCausalConv:
    def test_kernel1_identity(self):
        x = np.arange(8.0).reshape(1, 1, 8)
        out = _conv(x, np.ones((1, 1, 1)), np.zeros(1))
        assert_allclose(out.data, x)

    def test_running_pair_sum(self):
        # k=2, d=1, taps [1,1]: y[s] = x[s] + x[s-1] with a zero before the start
        x = np.array([[[1.0, 2.0, 3.0, 4.0]]])
        out = _conv(x, np.ones((1, 1, 2)), np.zeros(1))
        assert_allclose(out.data, [[[1.0, 3.0, 5.0, 7.0]]])

    def test_dilated_pair_sum(self):
        # k=2, d=2: y[s] = x[s] + x[s-2]
        x = np.array([[[1.0, 2.0, 3.0, 4.0, 5.0]]])
        out = _conv(x, np.ones((1, 1, 2)), np.zeros(1), d=2)
        assert_allclose(out.data, [[[1.0, 2.0, 4.0, 6.0, 8.0]]])

    def test_bias_only(self):
        x = np.zeros((2, 1, 4))
        out = _conv(x, np.zeros((3, 1, 2)), np.array([1.0, -2.0, 0.5]))
        assert out.shape == (2, 3, 4)
        assert_allclose(out.data[1, :, 2], [1.0, -2.0, 0.5])

    def test_length_preserved(self):
        rng = np.random.default_rng(0)
        for t in (1, 2, 5, 17):
            for k in (1, 2, 3):
                for d in (1, 2, 4):
                    x = rng.normal(size=(2, 3, t))
                    w = rng.normal(size=(4, 3, k))
                    out = _conv(x, w, np.zeros(4), d)
                    assert out.shape == (2, 4, t)

    def test_loop_oracle(self):
        # independent nested-loop evaluation of the defining sum
        rng = np.random.default_rng(1)
        b, ci, co, k, t, d = 2, 3, 4, 3, 7, 2
        x = rng.normal(size=(b, ci, t))
        w = rng.normal(size=(co, ci, k))
        bias = rng.normal(size=co)
        want = np.zeros((b, co, t))
        for bi in range(b):
            for o in range(co):
                for s in range(t):
                    acc = bias[o]
                    for i in range(k):
                        src = s - d * i
                        if src >= 0:
                            acc += np.dot(w[o, :, i], x[bi, :, src])
                    want[bi, o, s] = acc
        assert_allclose(_conv(x, w, bias, d).data, want, atol=1e-12)

    def test_causality(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(1, 2, 12))
        w = rng.normal(size=(3, 2, 3))
        bias = rng.normal(size=3)
        base = _conv(x, w, bias, 2).data
        for cut in (3, 7, 10):
            x2 = x.copy()
            x2[:, :, cut + 1 :] += rng.normal(size=x2[:, :, cut + 1 :].shape)
            got = _conv(x2, w, bias, 2).data
            assert_allclose(got[:, :, : cut + 1], base[:, :, : cut + 1], atol=1e-12)

    def test_impulse_support(self):
        # single spike at position p lights up outputs p .. p+(k-1)*d only
        t, k, d, p = 16, 3, 2, 5
        x = np.zeros((1, 1, t))
        x[0, 0, p] = 1.0
        out = _conv(x, np.ones((1, 1, k)), np.zeros(1), d).data[0, 0]
        lit = np.nonzero(out != 0.0)[0]
        assert lit.min() == p and lit.max() == p + (k - 1) * d

    def test_shape_errors(self):
        with pytest.raises(ShapeError):
            _conv(np.zeros((2, 3)), np.zeros((1, 1, 1)), np.zeros(1))
        with pytest.raises(ShapeError):
            _conv(np.zeros((1, 2, 4)), np.zeros((1, 3, 1)), np.zeros(1))
        with pytest.raises(ShapeError):
            _conv(np.zeros((1, 2, 4)), np.zeros((3, 2, 1)), np.zeros(2))

    def test_gradients(self):
        rng = np.random.default_rng(3)
        x = Tensor(rng.normal(size=(2, 2, 6)), requires_grad=True)
        w = Tensor(rng.normal(size=(3, 2, 3)), requires_grad=True)
        b = Tensor(rng.normal(size=3), requires_grad=True)
        proj = rng.normal(size=(2, 3, 6))

        def f(_):
            return tensor_sum(mul(causal_dilated_conv1d(x, w, b, 2), Tensor(proj)))

        f(x).backward()
        for t in (x, w, b):
            assert grad_check_error(t.grad, finite_diff_grad(f, t)) < 1e-8


class TestDense:
    def test_matches_manual_affine(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(5, 3))
        w = rng.normal(size=(3, 2))
        b = rng.normal(size=2)
        out = dense(Tensor(x), Tensor(w), Tensor(b))
        assert_allclose(out.data, x @ w + b, atol=1e-12)

    def test_batched_input(self):
        rng = np.random.default_rng(5)
        layer = Dense(4, 3, rng)
        x = rng.normal(size=(2, 7, 4))
        out = layer(Tensor(x))
        assert out.shape == (2, 7, 3)
        assert_allclose(out.data, x @ layer.weight.data + layer.bias.data, atol=1e-12)

    def test_feature_mismatch(self):
        with pytest.raises(ShapeError):
            dense(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))), Tensor(np.zeros(2)))

    def test_gradients(self):
        rng = np.random.default_rng(6)
        layer = Dense(3, 2, rng)
        x = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        proj = rng.normal(size=(4, 2))

        def f(_):
            return tensor_sum(mul(layer(x), Tensor(proj)))

        f(x).backward()
        for t in (x, layer.weight, layer.bias):
            assert grad_check_error(t.grad, finite_diff_grad(f, t)) < 1e-8

    def test_init_bounds(self):
        rng = np.random.default_rng(7)
        w = uniform_init(rng, (100, 100), fan_in=64)
        assert np.all(np.abs(w) <= 1.0 / 8.0)
        assert np.abs(w).max() > 0.9 / 8.0  # actually fills the range


class TestBatchNorm:
    def test_train_normalizes_batch(self):
        rng = np.random.default_rng(8)
        bn = BatchNorm1d(3)
        x = rng.normal(size=(4, 3, 5)) * 3.0 + 7.0
        out = bn(Tensor(x)).data
        assert_allclose(out.mean(axis=(0, 2)), 0.0, atol=1e-9)
        assert_allclose(out.var(axis=(0, 2)), 1.0, atol=1e-3)

    def test_running_stats_ema(self):
        rng = np.random.default_rng(9)
        bn = BatchNorm1d(2, momentum=0.1)
        x = rng.normal(size=(8, 2, 4)) + 5.0
        bn(Tensor(x))
        want_mean = 0.9 * np.zeros(2) + 0.1 * x.mean(axis=(0, 2))
        want_var = 0.9 * np.ones(2) + 0.1 * x.var(axis=(0, 2))
        assert_allclose(bn.running_mean, want_mean, atol=1e-12)
        assert_allclose(bn.running_var, want_var, atol=1e-12)

    def test_eval_uses_running_stats(self):
        bn = BatchNorm1d(1)
        bn.training = False
        bn.running_mean = np.array([2.0])
        bn.running_var = np.array([4.0])
        x = np.array([[[2.0, 4.0, 0.0]]])
        out = bn(Tensor(x)).data
        assert_allclose(out, (x - 2.0) / np.sqrt(4.0 + bn.eps), atol=1e-9)

    def test_eval_does_not_update_stats(self):
        bn = BatchNorm1d(2)
        bn.training = False
        before = (bn.running_mean.copy(), bn.running_var.copy())
        bn(Tensor(np.random.default_rng(10).normal(size=(3, 2, 4))))
        assert_allclose(bn.running_mean, before[0])
        assert_allclose(bn.running_var, before[1])

    def test_single_element_batch_rejected(self):
        bn = BatchNorm1d(2)
        with pytest.raises(ContractError):
            bn(Tensor(np.zeros((1, 2, 1))))

    def test_gradients_train_mode(self):
        rng = np.random.default_rng(11)
        bn = BatchNorm1d(3)
        x = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
        proj = rng.normal(size=(2, 3, 4))

        def f(_):
            # reset running stats so repeated finite-difference probes see
            # the same (pure) function of the batch
            bn.running_mean = np.zeros(3)
            bn.running_var = np.ones(3)
            return tensor_sum(mul(bn(x), Tensor(proj)))

        f(x).backward()
        for t in (x, bn.gamma, bn.beta):
            assert grad_check_error(t.grad, finite_diff_grad(f, t)) < 1e-7

    def test_gradients_eval_mode(self):
        rng = np.random.default_rng(12)
        bn = BatchNorm1d(2)
        bn.training = False
        bn.running_mean = rng.normal(size=2)
        bn.running_var = rng.random(2) + 0.5
        x = Tensor(rng.normal(size=(3, 2, 4)), requires_grad=True)
        proj = rng.normal(size=(3, 2, 4))

        def f(_):
            return tensor_sum(mul(bn(x), Tensor(proj)))

        f(x).backward()
        for t in (x, bn.gamma, bn.beta):
            assert grad_check_error(t.grad, finite_diff_grad(f, t)) < 1e-8


class TestDropout:
    def test_rate_zero_is_identity(self):
        d = Dropout(0.0)
        x = Tensor(np.arange(5.0))
        assert d(x) is x

    def test_eval_is_identity(self):
        d = Dropout(0.5)
        d.training = False
        x = Tensor(np.arange(5.0))
        assert d(x) is x

    def test_drop_fraction_and_scaling(self):
        d = Dropout(0.3, seed=0)
        x = Tensor(np.ones((200, 500)))
        out = d(x).data
        dropped = float((out == 0.0).mean())
        assert abs(dropped - 0.3) < 0.02
        kept = out[out != 0.0]
        assert_allclose(kept, 1.0 / 0.7, atol=1e-12)
        assert abs(out.mean() - 1.0) < 0.05  # inverted scaling keeps the expectation

    def test_eval_consumes_no_randomness(self):
        d = Dropout(0.5, seed=1)
        d.training = False
        d(Tensor(np.ones(10)))
        d.training = True
        a = d(Tensor(np.ones(10))).data
        d2 = Dropout(0.5, seed=1)
        b = d2(Tensor(np.ones(10))).data
        assert_allclose(a, b)

    def test_invalid_rate(self):
        with pytest.raises(ContractError):
            Dropout(1.0)
        with pytest.raises(ContractError):
            Dropout(-0.1)

    def test_gradient_is_scaled_mask(self):
        d = Dropout(0.4, seed=2)
        x = Tensor(np.ones(1000), requires_grad=True)
        out = d(x)
        tensor_sum(out).backward()
        # gradient equals the applied mask (0 where dropped, 1/(1-p) where kept)
        assert_allclose(x.grad, out.data, atol=1e-12)


class TestLayerNormModule:
    def test_wraps_op(self):
        rng = np.random.default_rng(13)
        ln = LayerNorm(6)
        x = rng.normal(size=(2, 6))
        out = ln(Tensor(x)).data
        assert_allclose(out.mean(axis=-1), 0.0, atol=1e-9)

    def test_parameters_start_at_identity(self):
        ln = LayerNorm(4)
        assert_allclose(ln.gamma.data, np.ones(4))
        assert_allclose(ln.beta.data, np.zeros(4))
