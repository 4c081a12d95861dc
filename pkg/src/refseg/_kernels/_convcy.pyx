# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled convolution kernels (same contract as numpy_backend)."""

import numpy as np

NAME = "compiled"


def conv3x3_forward(double[:, :, ::1] x, double[:, :, :, ::1] k, double[::1] b):
    cdef Py_ssize_t h = x.shape[0], w = x.shape[1], ci = x.shape[2]
    cdef Py_ssize_t co = k.shape[3]
    out = np.empty((h, w, co), dtype=np.float64)
    cdef double[:, :, ::1] y = out
    cdef Py_ssize_t i, j, kh, kw, ii, jj, c, o
    cdef double xv
    for i in range(h):
        for j in range(w):
            for o in range(co):
                y[i, j, o] = b[o]
    for i in range(h):
        for kh in range(3):
            ii = i + kh - 1
            if ii < 0 or ii >= h:
                continue
            for j in range(w):
                for kw in range(3):
                    jj = j + kw - 1
                    if jj < 0 or jj >= w:
                        continue
                    for c in range(ci):
                        xv = x[ii, jj, c]
                        for o in range(co):
                            y[i, j, o] += xv * k[kh, kw, c, o]
    return out


def conv3x3_backward(double[:, :, ::1] x, double[:, :, :, ::1] k,
                     double[:, :, ::1] gy):
    cdef Py_ssize_t h = x.shape[0], w = x.shape[1], ci = x.shape[2]
    cdef Py_ssize_t co = k.shape[3]
    gx_arr = np.zeros((h, w, ci), dtype=np.float64)
    gk_arr = np.zeros((3, 3, ci, co), dtype=np.float64)
    gb_arr = np.zeros(co, dtype=np.float64)
    cdef double[:, :, ::1] gx = gx_arr
    cdef double[:, :, :, ::1] gk = gk_arr
    cdef double[::1] gb = gb_arr
    cdef Py_ssize_t i, j, kh, kw, ii, jj, c, o
    cdef double gv, xv, acc
    for i in range(h):
        for j in range(w):
            for o in range(co):
                gb[o] += gy[i, j, o]
    for i in range(h):
        for kh in range(3):
            ii = i + kh - 1
            if ii < 0 or ii >= h:
                continue
            for j in range(w):
                for kw in range(3):
                    jj = j + kw - 1
                    if jj < 0 or jj >= w:
                        continue
                    for c in range(ci):
                        xv = x[ii, jj, c]
                        acc = 0.0
                        for o in range(co):
                            gv = gy[i, j, o]
                            gk[kh, kw, c, o] += xv * gv
                            acc += gv * k[kh, kw, c, o]
                        gx[ii, jj, c] += acc
    return gx_arr, gk_arr, gb_arr


def tconv2x_forward(double[:, :, ::1] x, double[:, :, :, ::1] k, double[::1] b):
    cdef Py_ssize_t h = x.shape[0], w = x.shape[1], ci = x.shape[2]
    cdef Py_ssize_t co = k.shape[3]
    out = np.empty((2 * h, 2 * w, co), dtype=np.float64)
    cdef double[:, :, ::1] y = out
    cdef Py_ssize_t i, j, kh, kw, c, o
    cdef double xv, acc
    for i in range(h):
        for j in range(w):
            for kh in range(2):
                for kw in range(2):
                    for o in range(co):
                        acc = b[o]
                        for c in range(ci):
                            acc += x[i, j, c] * k[kh, kw, c, o]
                        y[2 * i + kh, 2 * j + kw, o] = acc
    return out


def tconv2x_backward(double[:, :, ::1] x, double[:, :, :, ::1] k,
                     double[:, :, ::1] gy):
    cdef Py_ssize_t h = x.shape[0], w = x.shape[1], ci = x.shape[2]
    cdef Py_ssize_t co = k.shape[3]
    gx_arr = np.zeros((h, w, ci), dtype=np.float64)
    gk_arr = np.zeros((2, 2, ci, co), dtype=np.float64)
    gb_arr = np.zeros(co, dtype=np.float64)
    cdef double[:, :, ::1] gx = gx_arr
    cdef double[:, :, :, ::1] gk = gk_arr
    cdef double[::1] gb = gb_arr
    cdef Py_ssize_t i, j, kh, kw, c, o
    cdef double gv, xv, acc
    for i in range(h):
        for j in range(w):
            for kh in range(2):
                for kw in range(2):
                    for c in range(ci):
                        xv = x[i, j, c]
                        acc = 0.0
                        for o in range(co):
                            gv = gy[2 * i + kh, 2 * j + kw, o]
                            gk[kh, kw, c, o] += xv * gv
                            acc += gv * k[kh, kw, c, o]
                        gx[i, j, c] += acc
    for i in range(2 * h):
        for j in range(2 * w):
            for o in range(co):
                gb[o] += gy[i, j, o]
    return gx_arr, gk_arr, gb_arr
