"""Shared test helpers: the central finite-difference gradient oracle."""

import numpy as np
import pytest

from refseg import tensor as T


def finite_diff_grads(make_loss, arrays, step=1e-5, max_coords=None, rng=None):
    """Central-difference gradients of make_loss w.r.t. each array.

    make_loss takes the raw ndarrays and must return a float. Stays fully
    independent of the autodiff path: it only re-evaluates the forward
    function at perturbed inputs. If max_coords is set, a random subset of
    coordinates per array is probed (the analytic grads are subsampled to
    match in rel_error_vs_analytic).
    """
    grads = []
    coords_used = []
    for i, a in enumerate(arrays):
        flat = a.reshape(-1)
        n = flat.size
        if max_coords is not None and n > max_coords:
            idx = rng.choice(n, size=max_coords, replace=False)
        else:
            idx = np.arange(n)
        g = np.zeros(len(idx))
        for j, c in enumerate(idx):
            old = flat[c]
            flat[c] = old + step
            up = make_loss(arrays)
            flat[c] = old - step
            down = make_loss(arrays)
            flat[c] = old
            g[j] = (up - down) / (2.0 * step)
        grads.append(g)
        coords_used.append(idx)
    return grads, coords_used


def rel_error(a, b):
    """Scale-free distance between two gradient vectors."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return np.linalg.norm(a - b) / denom


def check_grads(build_loss, arrays, tol, step=1e-5, max_coords=None, seed=0):
    """Assert analytic grads match central differences within tol.

    build_loss maps a list of Tensors to a scalar Tensor; the same math is
    re-run via make_loss on raw arrays for the numeric side.
    """
    tensors = [T.Tensor(a.copy(), requires_grad=True) for a in arrays]
    loss = build_loss(tensors)
    T.backward(loss)
    analytic = [t.grad.reshape(-1).copy() if t.grad is not None else np.zeros(t.size)
                for t in tensors]

    def make_loss(raw):
        ts = [T.Tensor(a) for a in raw]
        return float(build_loss(ts).data)

    rng = np.random.default_rng(seed)
    numeric, coords = finite_diff_grads(
        make_loss, [a.copy() for a in arrays], step=step,
        max_coords=max_coords, rng=rng)
    worst = 0.0
    for g_a, g_n, idx in zip(analytic, numeric, coords):
        worst = max(worst, rel_error(g_a[idx], g_n))
    assert worst < tol, f"gradient mismatch: rel err {worst:.3e} >= {tol:g}"
    return worst


def check_param_grads(forward_fn, params, tol, step=1e-5, max_coords=40, seed=0):
    """FD check against module Parameters (or raw Tensors) that forward_fn
    reads live. forward_fn() must rebuild the loss graph on every call."""
    tensors = [p.tensor if hasattr(p, "tensor") else p for p in params]
    for t in tensors:
        t.grad = None
    loss = forward_fn()
    T.backward(loss)
    analytic = [t.grad.reshape(-1).copy() if t.grad is not None else np.zeros(t.size)
                for t in tensors]
    rng_ = np.random.default_rng(seed)
    worst = 0.0
    for t, g_a in zip(tensors, analytic):
        flat = t.data.reshape(-1)
        n = flat.size
        idx = (rng_.choice(n, size=max_coords, replace=False)
               if max_coords is not None and n > max_coords else np.arange(n))
        g_n = np.zeros(len(idx))
        for j, c in enumerate(idx):
            old = flat[c]
            flat[c] = old + step
            up = float(forward_fn().data)
            flat[c] = old - step
            down = float(forward_fn().data)
            flat[c] = old
            g_n[j] = (up - down) / (2.0 * step)
        worst = max(worst, rel_error(g_a[idx], g_n))
    assert worst < tol, f"param gradient mismatch: rel err {worst:.3e} >= {tol:g}"
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
