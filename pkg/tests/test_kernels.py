"""Convolution kernels vs an independent brute-force oracle, plus backend parity."""

import numpy as np
import pytest

from conftest import check_grads
from refseg import _kernels
from refseg import tensor as T
from refseg.errors import DimensionError


def conv3x3_bruteforce(x, k, b):
    """Nested-loop oracle: stride 1, zero pad 1."""
    h, w, ci = x.shape
    co = k.shape[3]
    y = np.zeros((h, w, co))
    for i in range(h):
        for j in range(w):
            for o in range(co):
                acc = b[o]
                for kh in range(3):
                    for kw in range(3):
                        ii, jj = i + kh - 1, j + kw - 1
                        if 0 <= ii < h and 0 <= jj < w:
                            for c in range(ci):
                                acc += x[ii, jj, c] * k[kh, kw, c, o]
                y[i, j, o] = acc
    return y


def tconv2x_bruteforce(x, k, b):
    h, w, ci = x.shape
    co = k.shape[3]
    y = np.zeros((2 * h, 2 * w, co)) + b
    for i in range(h):
        for j in range(w):
            for kh in range(2):
                for kw in range(2):
                    for o in range(co):
                        for c in range(ci):
                            y[2 * i + kh, 2 * j + kw, o] += x[i, j, c] * k[kh, kw, c, o]
    return y


class TestConv3x3:
    def test_identity_kernel(self, rng):
        x = rng.normal(size=(5, 4, 1))
        k = np.zeros((3, 3, 1, 1))
        k[1, 1, 0, 0] = 1.0
        out = T.conv3x3(T.Tensor(x), T.Tensor(k), T.Tensor(np.zeros(1)))
        assert np.allclose(out.data, x, atol=1e-15)

    def test_center_pixel_window_sum(self):
        x = np.ones((5, 5, 1))
        k = np.ones((3, 3, 1, 1))
        out = T.conv3x3(T.Tensor(x), T.Tensor(k), T.Tensor(np.zeros(1)))
        assert out.data[2, 2, 0] == 9.0

    def test_matches_bruteforce_all_small_shapes(self, rng):
        for h in range(1, 6):
            for w in range(1, 6):
                for ci in (1, 2, 3):
                    for co in (1, 3):
                        x = rng.normal(size=(h, w, ci))
                        k = rng.normal(size=(3, 3, ci, co))
                        b = rng.normal(size=co)
                        got = T.conv3x3(T.Tensor(x), T.Tensor(k), T.Tensor(b)).data
                        assert np.allclose(got, conv3x3_bruteforce(x, k, b), atol=1e-12)

    def test_channel_mismatch(self, rng):
        with pytest.raises(DimensionError):
            T.conv3x3(T.Tensor(np.zeros((4, 4, 2))), T.Tensor(np.zeros((3, 3, 3, 1))),
                      T.Tensor(np.zeros(1)))

    def test_grad(self, rng):
        x = rng.normal(size=(4, 4, 2))
        k = rng.normal(size=(3, 3, 2, 3))
        b = rng.normal(size=3)
        w = rng.normal(size=(4, 4, 3))
        check_grads(
            lambda ts: T.sum_all(T.mul(T.conv3x3(ts[0], ts[1], ts[2]), T.Tensor(w))),
            [x, k, b], 1e-5)


class TestTransposedConv2x:
    def test_single_pixel_broadcast(self):
        x = np.full((1, 1, 1), 3.5)
        k = np.ones((2, 2, 1, 1))
        out = T.transposed_conv2x(T.Tensor(x), T.Tensor(k), T.Tensor(np.zeros(1)))
        assert out.data.shape == (2, 2, 1)
        assert np.all(out.data == 3.5)

    def test_disjoint_receptive_fields(self, rng):
        # each input pixel feeds exactly one 2x2 output block
        x = rng.normal(size=(3, 3, 2))
        k = rng.normal(size=(2, 2, 2, 1))
        b = np.zeros(1)
        base = T.transposed_conv2x(T.Tensor(x), T.Tensor(k), T.Tensor(b)).data
        x2 = x.copy()
        x2[1, 2] += 1.0
        moved = T.transposed_conv2x(T.Tensor(x2), T.Tensor(k), T.Tensor(b)).data
        diff = np.abs(moved - base).sum(axis=2) > 0
        expect = np.zeros((6, 6), dtype=bool)
        expect[2:4, 4:6] = True
        assert np.array_equal(diff, expect)

    def test_matches_bruteforce(self, rng):
        for h, w, ci, co in [(1, 1, 1, 1), (2, 3, 2, 2), (4, 4, 3, 1)]:
            x = rng.normal(size=(h, w, ci))
            k = rng.normal(size=(2, 2, ci, co))
            b = rng.normal(size=co)
            got = T.transposed_conv2x(T.Tensor(x), T.Tensor(k), T.Tensor(b)).data
            assert got.shape == (2 * h, 2 * w, co)
            assert np.allclose(got, tconv2x_bruteforce(x, k, b), atol=1e-12)

    def test_grad(self, rng):
        x = rng.normal(size=(3, 3, 2))
        k = rng.normal(size=(2, 2, 2, 2))
        b = rng.normal(size=2)
        w = rng.normal(size=(6, 6, 2))
        check_grads(
            lambda ts: T.sum_all(T.mul(T.transposed_conv2x(ts[0], ts[1], ts[2]), T.Tensor(w))),
            [x, k, b], 1e-5)


class TestBackendParity:
    """Every importable backend agrees with the numpy reference."""

    def test_backends_agree(self, rng):
        impls = _kernels.backends()
        ref = impls["numpy"]
        others = {n: m for n, m in impls.items() if n != "numpy"}
        if not others:
            pytest.skip("compiled backend not built")
        x = np.ascontiguousarray(rng.normal(size=(7, 6, 5)))
        k3 = np.ascontiguousarray(rng.normal(size=(3, 3, 5, 4)))
        k2 = np.ascontiguousarray(rng.normal(size=(2, 2, 5, 4)))
        b = np.ascontiguousarray(rng.normal(size=4))
        gy3 = np.ascontiguousarray(rng.normal(size=(7, 6, 4)))
        gy2 = np.ascontiguousarray(rng.normal(size=(14, 12, 4)))
        for name, m in others.items():
            assert np.allclose(np.asarray(m.conv3x3_forward(x, k3, b)),
                               ref.conv3x3_forward(x, k3, b), atol=1e-12), name
            for got, want in zip(m.conv3x3_backward(x, k3, gy3),
                                 ref.conv3x3_backward(x, k3, gy3)):
                assert np.allclose(np.asarray(got), want, atol=1e-12), name
            assert np.allclose(np.asarray(m.tconv2x_forward(x, k2, b)),
                               ref.tconv2x_forward(x, k2, b), atol=1e-12), name
            for got, want in zip(m.tconv2x_backward(x, k2, gy2),
                                 ref.tconv2x_backward(x, k2, gy2)):
                assert np.allclose(np.asarray(got), want, atol=1e-12), name

    def test_selected_backend_reported(self):
        assert _kernels.BACKEND in ("numpy", "compiled")
