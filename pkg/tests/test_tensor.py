"""Tensor op semantics and gradient checks against the finite-difference oracle."""

import math

import numpy as np
import pytest

from conftest import check_grads
from refseg import tensor as T
from refseg.errors import DimensionError, GraphError, NumericsError


class TestMatmul:
    def test_identity(self):
        a = T.Tensor(np.eye(2))
        b = T.Tensor([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(T.matmul(a, b).data, b.data)

    def test_selector_row(self):
        a = T.Tensor([[1.0, 0.0], [0.0, 0.0]])
        b = T.Tensor([[5.0], [7.0]])
        assert np.array_equal(T.matmul(a, b).data, [[5.0], [0.0]])

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            T.matmul(T.Tensor(np.zeros((2, 3))), T.Tensor(np.zeros((2, 3))))

    def test_grad_of_sum_is_ones_times_bT(self, rng):
        # d(sum(a@b))/da = ones(3,2) @ b.T
        a = rng.normal(size=(3, 4))
        b = rng.normal(size=(4, 2))
        ta, tb = T.Tensor(a, requires_grad=True), T.Tensor(b)
        T.backward(T.sum_all(T.matmul(ta, tb)))
        assert np.allclose(ta.grad, np.ones((3, 2)) @ b.T, atol=1e-12)

    def test_grad_vs_finite_difference(self, rng):
        a = rng.normal(size=(3, 4))
        b = rng.normal(size=(4, 2))
        check_grads(lambda ts: T.sum_all(T.matmul(ts[0], ts[1])), [a, b], 1e-6)


class TestSoftmaxRows:
    def test_symmetry(self):
        out = T.softmax_rows(T.Tensor([[0.0, 0.0, 0.0]]))
        assert np.allclose(out.data, 1.0 / 3.0, atol=1e-15)

    def test_ln2_case(self):
        # direct evaluation of the e^x normalization
        out = T.softmax_rows(T.Tensor([[math.log(2.0), 0.0]]))
        assert np.allclose(out.data, [[2.0 / 3.0, 1.0 / 3.0]], atol=1e-12)

    def test_minus_inf_entry_is_exact_zero(self):
        x = T.constant([[5.0, -np.inf]], allow_nonfinite=True)
        out = T.softmax_rows(x)
        assert out.data[0, 0] == 1.0 and out.data[0, 1] == 0.0

    def test_additive_mask_zeroes_entries(self, rng):
        x = T.Tensor(rng.normal(size=(4, 5)))
        mask = np.zeros((4, 5))
        mask[:, 2] = -np.inf
        out = T.softmax_rows(x, additive_mask=mask)
        assert np.all(out.data[:, 2] == 0.0)
        assert np.allclose(out.data.sum(axis=1), 1.0, atol=1e-9)

    def test_fully_masked_row_raises(self):
        x = T.constant(np.full((1, 3), -np.inf), allow_nonfinite=True)
        with pytest.raises(NumericsError):
            T.softmax_rows(x)

    def test_rows_sum_to_one(self, rng):
        for _ in range(20):
            out = T.softmax_rows(T.Tensor(rng.normal(size=(6, 9)) * 3.0))
            assert np.allclose(out.data.sum(axis=1), 1.0, atol=1e-9)

    def test_grad(self, rng):
        x = rng.normal(size=(3, 5))
        w = rng.normal(size=(3, 5))  # weighting makes the grad non-trivial
        check_grads(
            lambda ts: T.sum_all(T.mul(T.softmax_rows(ts[0]), T.Tensor(w))),
            [x], 1e-6)

    def test_grad_with_mask(self, rng):
        x = rng.normal(size=(3, 5))
        w = rng.normal(size=(3, 5))
        mask = np.zeros((3, 5))
        mask[:, 4] = -np.inf
        check_grads(
            lambda ts: T.sum_all(T.mul(T.softmax_rows(ts[0], additive_mask=mask),
                                       T.Tensor(w))),
            [x], 1e-6)


class TestLayerNorm:
    def test_constant_row_maps_to_zero(self):
        x = T.Tensor(np.full((2, 4), 3.7))
        out = T.layer_norm(x, T.Tensor(np.ones(4)), T.Tensor(np.zeros(4)))
        assert np.allclose(out.data, 0.0, atol=1e-12)

    def test_two_point_row(self):
        # mean 0, var 1 -> scaled by (1 + 1e-5)^(-1/2)
        x = T.Tensor([[1.0, -1.0]])
        out = T.layer_norm(x, T.Tensor(np.ones(2)), T.Tensor(np.zeros(2)))
        expect = np.array([[1.0, -1.0]]) / np.sqrt(1.0 + 1e-5)
        assert np.allclose(out.data, expect, atol=1e-12)

    def test_normalization_invariants(self, rng):
        x = rng.normal(size=(8, 16)) * 4.0 + 2.0
        out = T.layer_norm(T.Tensor(x), T.Tensor(np.ones(16)), T.Tensor(np.zeros(16)))
        assert np.all(np.abs(out.data.mean(axis=1)) < 1e-9)
        assert np.all(np.abs(out.data.var(axis=1) - 1.0) < 1e-4)

    def test_grad(self, rng):
        x = rng.normal(size=(4, 6))
        gain = rng.normal(size=6)
        bias = rng.normal(size=6)
        w = rng.normal(size=(4, 6))
        check_grads(
            lambda ts: T.sum_all(T.mul(T.layer_norm(ts[0], ts[1], ts[2]), T.Tensor(w))),
            [x, gain, bias], 1e-5)


class TestActivations:
    def test_gelu_at_zero(self):
        assert T.gelu(T.Tensor([0.0])).data[0] == 0.0

    def test_sigmoid_at_zero(self):
        assert T.sigmoid(T.Tensor([0.0])).data[0] == 0.5

    def test_sigmoid_symmetry(self, rng):
        x = rng.normal(size=100) * 5.0
        s_pos = T.sigmoid(T.Tensor(x)).data
        s_neg = T.sigmoid(T.Tensor(-x)).data
        assert np.all(np.abs(s_neg - (1.0 - s_pos)) < 1e-12)

    def test_gelu_grad(self, rng):
        x = rng.normal(size=(3, 4))
        w = rng.normal(size=(3, 4))
        check_grads(lambda ts: T.sum_all(T.mul(T.gelu(ts[0]), T.Tensor(w))), [x], 1e-6)

    def test_sigmoid_log_clamp_pow_grads(self, rng):
        x = rng.uniform(0.2, 0.8, size=(3, 4))
        check_grads(lambda ts: T.sum_all(T.log(ts[0])), [x], 1e-6)
        check_grads(lambda ts: T.sum_all(T.powc(ts[0], 2.5)), [x], 1e-6)
        check_grads(lambda ts: T.sum_all(T.sigmoid(ts[0])), [x], 1e-6)
        check_grads(lambda ts: T.sum_all(T.clamp(ts[0], 0.3, 0.7)), [x], 1e-5)


class TestBackwardContract:
    def test_sum_grad_is_ones(self, rng):
        x = T.Tensor(rng.normal(size=(3, 3)), requires_grad=True)
        T.backward(T.sum_all(x))
        assert np.array_equal(x.grad, np.ones((3, 3)))

    def test_square_grad_is_2x(self, rng):
        data = rng.normal(size=(4,))
        x = T.Tensor(data, requires_grad=True)
        T.backward(T.sum_all(T.mul(x, x)))
        assert np.allclose(x.grad, 2.0 * data, atol=1e-12)

    def test_non_scalar_loss_rejected(self, rng):
        x = T.Tensor(rng.normal(size=(2, 2)), requires_grad=True)
        with pytest.raises(GraphError):
            T.backward(T.mul(x, x))

    def test_reuse_accumulates(self, rng):
        data = rng.normal(size=(3,))
        x = T.Tensor(data, requires_grad=True)
        T.backward(T.sum_all(T.add(x, x)))
        assert np.allclose(x.grad, 2.0, atol=1e-15)

    def test_constant_inputs_get_no_grad(self, rng):
        x = T.Tensor(rng.normal(size=(3,)))
        y = T.Tensor(rng.normal(size=(3,)), requires_grad=True)
        T.backward(T.sum_all(T.mul(x, y)))
        assert x.grad is None

    def test_nonfinite_construction_rejected(self):
        with pytest.raises(NumericsError):
            T.Tensor([np.nan])
        with pytest.raises(NumericsError):
            T.Tensor([np.inf])


class TestShapeOps:
    def test_concat_slice_roundtrip(self, rng):
        a = T.Tensor(rng.normal(size=(2, 3)), requires_grad=True)
        b = T.Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        cat = T.concat_rows([a, b])
        assert np.array_equal(T.slice_rows(cat, 2, 6).data, b.data)
        check_grads(
            lambda ts: T.sum_all(T.powc(T.concat_rows([ts[0], ts[1]]), 2.0)),
            [a.data.copy(), b.data.copy()], 1e-6)

    def test_concat_cols_grad(self, rng):
        a = rng.normal(size=(3, 2))
        b = rng.normal(size=(3, 5))
        check_grads(
            lambda ts: T.sum_all(T.powc(T.slice_cols(T.concat_cols([ts[0], ts[1]]), 1, 6), 2.0)),
            [a, b], 1e-6)

    def test_reshape_transpose(self, rng):
        x = rng.normal(size=(2, 6))
        check_grads(
            lambda ts: T.sum_all(T.powc(T.transpose2d(T.reshape(ts[0], (4, 3))), 2.0)),
            [x], 1e-6)

    def test_mean_div_add_bias(self, rng):
        x = rng.normal(size=(3, 4))
        b = rng.normal(size=4)
        y = rng.uniform(1.0, 2.0, size=(3, 4))
        check_grads(lambda ts: T.mean_all(T.add_bias(ts[0], ts[1])), [x, b], 1e-6)
        check_grads(lambda ts: T.sum_all(T.div(ts[0], ts[1])), [x, y], 1e-6)
