# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled saturating fixed-point convolution."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport int32_t, int64_t

cnp.import_array()

cdef int64_t ACC_MAX = 2147483647
cdef int64_t ACC_MIN = -2147483648


def conv2d_sat(const int32_t[:, :, ::1] x, const int32_t[:, :, :, ::1] w,
               const int64_t[::1] bias, int stride, int pad_top, int pad_left,
               int out_h, int out_w):
    """Integer conv2d, one saturating 32-bit accumulator per output.

    x is (H, W, Cin), w is (kh, kw, Cin, Cout). Products are summed in
    (ky, kx, ci) order starting from the bias; every partial sum is clamped.
    Returns (out int32 (out_h, out_w, Cout), overflow count).
    """
    cdef Py_ssize_t H = x.shape[0], W = x.shape[1], C = x.shape[2]
    cdef Py_ssize_t KH = w.shape[0], KW = w.shape[1], CO = w.shape[3]
    if w.shape[2] != C:
        raise ValueError("kernel input channels do not match activation channels")
    if bias.shape[0] != CO:
        raise ValueError("bias length does not match filters")
    out = np.empty((out_h, out_w, CO), dtype=np.int32)
    cdef int32_t[:, :, ::1] o = out
    cdef Py_ssize_t oy, ox, co, ky, kx, ci, iy, ix
    cdef int64_t acc, b
    cdef long overflows = 0
    cdef bint flagged
    with nogil:
        for oy in range(out_h):
            for ox in range(out_w):
                for co in range(CO):
                    b = bias[co]
                    flagged = False
                    if b > ACC_MAX:
                        b = ACC_MAX
                        flagged = True
                    elif b < ACC_MIN:
                        b = ACC_MIN
                        flagged = True
                    acc = b
                    for ky in range(KH):
                        iy = oy * stride + ky - pad_top
                        if iy < 0 or iy >= H:
                            continue
                        for kx in range(KW):
                            ix = ox * stride + kx - pad_left
                            if ix < 0 or ix >= W:
                                continue
                            for ci in range(C):
                                acc = acc + <int64_t>x[iy, ix, ci] * <int64_t>w[ky, kx, ci, co]
                                if acc > ACC_MAX:
                                    acc = ACC_MAX
                                    flagged = True
                                elif acc < ACC_MIN:
                                    acc = ACC_MIN
                                    flagged = True
                    o[oy, ox, co] = <int32_t>acc
                    if flagged:
                        overflows += 1
    return out, overflows
