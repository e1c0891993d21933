# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled direct 3D convolution.

Each output channel of each sample is owned by exactly one thread and is
accumulated in float32 in the order (input channel, kt, kh, kw), so the result
is bit-identical for any thread count.
"""

import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange

cnp.import_array()


cdef inline Py_ssize_t _lo(Py_ssize_t k, Py_ssize_t pad, Py_ssize_t stride) noexcept nogil:
    # first output index o with o*stride - pad + k >= 0
    cdef Py_ssize_t num = pad - k
    if num <= 0:
        return 0
    return (num + stride - 1) // stride


cdef inline Py_ssize_t _hi(Py_ssize_t k, Py_ssize_t pad, Py_ssize_t stride,
                           Py_ssize_t size, Py_ssize_t out) noexcept nogil:
    # one past the last output index o with o*stride - pad + k < size
    cdef Py_ssize_t num = size - 1 + pad - k
    cdef Py_ssize_t hi
    if num < 0:
        return 0
    hi = num // stride + 1
    if hi > out:
        return out
    return hi


cdef void _pointwise(const float* x, const float* w, float* out,
                     Py_ssize_t CG, Py_ssize_t P) noexcept nogil:
    # out[p] += sum_ci w[ci] * x[ci, p], ci ascending
    cdef Py_ssize_t ci, p
    cdef float wv
    cdef const float* xr
    for ci in range(CG):
        wv = w[ci]
        xr = x + ci * P
        for p in range(P):
            out[p] += wv * xr[p]


cdef void _general(const float* x, const float* w, float* out,
                   Py_ssize_t CG, Py_ssize_t T, Py_ssize_t H, Py_ssize_t W,
                   Py_ssize_t KT, Py_ssize_t KH, Py_ssize_t KW,
                   Py_ssize_t st, Py_ssize_t sh, Py_ssize_t sw,
                   Py_ssize_t pt, Py_ssize_t ph, Py_ssize_t pw,
                   Py_ssize_t OT, Py_ssize_t OH, Py_ssize_t OW) noexcept nogil:
    cdef Py_ssize_t ci, kt, kh, kw, ot, oh, ow
    cdef Py_ssize_t t0, t1, h0, h1, w0, w1, it, ih, off
    cdef float wv
    cdef const float* xc
    cdef const float* xr
    cdef float* orow
    for ci in range(CG):
        xc = x + ci * T * H * W
        for kt in range(KT):
            t0 = _lo(kt, pt, st)
            t1 = _hi(kt, pt, st, T, OT)
            for kh in range(KH):
                h0 = _lo(kh, ph, sh)
                h1 = _hi(kh, ph, sh, H, OH)
                for kw in range(KW):
                    w0 = _lo(kw, pw, sw)
                    w1 = _hi(kw, pw, sw, W, OW)
                    wv = w[((ci * KT + kt) * KH + kh) * KW + kw]
                    off = kw - pw
                    for ot in range(t0, t1):
                        it = ot * st - pt + kt
                        for oh in range(h0, h1):
                            ih = oh * sh - ph + kh
                            xr = xc + (it * H + ih) * W
                            orow = out + (ot * OH + oh) * OW
                            if sw == 1:
                                for ow in range(w0, w1):
                                    orow[ow] += wv * xr[ow + off]
                            else:
                                for ow in range(w0, w1):
                                    orow[ow] += wv * xr[ow * sw + off]


def conv3d(
    const float[:, :, :, :, ::1] x,
    const float[:, :, :, :, ::1] w,
    tuple stride,
    tuple padding,
    int groups,
    int num_threads=1,
):
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1], T = x.shape[2], H = x.shape[3], W = x.shape[4]
    cdef Py_ssize_t O = w.shape[0], CG = w.shape[1], KT = w.shape[2], KH = w.shape[3], KW = w.shape[4]
    cdef Py_ssize_t st = stride[0], sh = stride[1], sw = stride[2]
    cdef Py_ssize_t pt = padding[0], ph = padding[1], pw = padding[2]
    if groups < 1 or C % groups or O % groups or C // groups != CG:
        raise ValueError("channel/group mismatch in conv3d")
    cdef Py_ssize_t OT = (T + 2 * pt - KT) // st + 1
    cdef Py_ssize_t OH = (H + 2 * ph - KH) // sh + 1
    cdef Py_ssize_t OW = (W + 2 * pw - KW) // sw + 1
    if OT < 1 or OH < 1 or OW < 1:
        raise ValueError("conv3d output would be empty")

    out_arr = np.zeros((N, O, OT, OH, OW), dtype=np.float32)
    cdef float[:, :, :, :, ::1] out = out_arr
    cdef Py_ssize_t OG = O // groups
    cdef Py_ssize_t P = T * H * W
    cdef Py_ssize_t OP = OT * OH * OW
    cdef Py_ssize_t wsize = CG * KT * KH * KW
    cdef bint pointwise = (KT == 1 and KH == 1 and KW == 1 and st == 1 and sh == 1 and sw == 1
                           and pt == 0 and ph == 0 and pw == 0)
    cdef Py_ssize_t job, n, o, g
    cdef const float* xbase = &x[0, 0, 0, 0, 0]
    cdef const float* wbase = &w[0, 0, 0, 0, 0]
    cdef float* obase = &out[0, 0, 0, 0, 0]
    cdef int threads = num_threads if num_threads > 0 else 1

    for job in prange(N * O, nogil=True, schedule="static", num_threads=threads):
        n = job // O
        o = job % O
        g = o // OG
        if pointwise:
            _pointwise(xbase + (n * C + g * CG) * P, wbase + o * wsize,
                       obase + job * OP, CG, P)
        else:
            _general(xbase + (n * C + g * CG) * P, wbase + o * wsize, obase + job * OP,
                     CG, T, H, W, KT, KH, KW, st, sh, sw, pt, ph, pw, OT, OH, OW)
    return out_arr
