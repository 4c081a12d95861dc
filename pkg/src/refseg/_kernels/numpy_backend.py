"""Pure-numpy convolution kernels (fallback backend).

Shared conventions for both backends:
  * feature maps are float64, row-major, shape (h, w, c)
  * conv3x3: 3x3 kernel, stride 1, zero padding 1, kernel shape (3, 3, cin, cout)
  * tconv2x: 2x2 kernel, stride 2, no padding, kernel shape (2, 2, cin, cout);
    output blocks are disjoint, spatial dims exactly double
"""

import numpy as np

NAME = "numpy"


def _padded(x):
    h, w, ci = x.shape
    xp = np.zeros((h + 2, w + 2, ci), dtype=np.float64)
    xp[1:-1, 1:-1, :] = x
    return xp


def conv3x3_forward(x, k, b):
    # one GEMM per kernel tap on a shifted view; avoids the 9x im2col blowup
    h, w, ci = x.shape
    co = k.shape[3]
    xp = _padded(x)
    y = np.broadcast_to(b, (h * w, co)).copy()
    for kh in range(3):
        for kw in range(3):
            patch = xp[kh:kh + h, kw:kw + w, :].reshape(h * w, ci)
            y += patch @ k[kh, kw]
    return y.reshape(h, w, co)


def conv3x3_backward(x, k, gy):
    h, w, ci = x.shape
    co = k.shape[3]
    g2 = gy.reshape(h * w, co)
    xp = _padded(x)
    gb = g2.sum(axis=0)
    gk = np.empty_like(k)
    gxp = np.zeros_like(xp)
    for kh in range(3):
        for kw in range(3):
            patch = xp[kh:kh + h, kw:kw + w, :].reshape(h * w, ci)
            gk[kh, kw] = patch.T @ g2
            gxp[kh:kh + h, kw:kw + w, :] += (g2 @ k[kh, kw].T).reshape(h, w, ci)
    return gxp[1:-1, 1:-1, :].copy(), gk, gb


def tconv2x_forward(x, k, b):
    h, w, ci = x.shape
    co = k.shape[3]
    xf = x.reshape(h * w, ci)
    y = np.empty((2 * h, 2 * w, co), dtype=np.float64)
    for kh in range(2):
        for kw in range(2):
            y[kh::2, kw::2, :] = (xf @ k[kh, kw]).reshape(h, w, co)
    y += b
    return y


def tconv2x_backward(x, k, gy):
    h, w, ci = x.shape
    co = k.shape[3]
    xf = x.reshape(h * w, ci)
    gb = gy.sum(axis=(0, 1))
    gk = np.empty_like(k)
    gx = np.zeros((h * w, ci), dtype=np.float64)
    for kh in range(2):
        for kw in range(2):
            gblock = gy[kh::2, kw::2, :].reshape(h * w, co)
            gk[kh, kw] = xf.T @ gblock
            gx += gblock @ k[kh, kw].T
    return gx.reshape(h, w, ci), gk, gb
