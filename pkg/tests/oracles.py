"""Reference implementations kept deliberately independent of the package."""

from __future__ import annotations

import math

import numpy as np


def naive_conv3d(x, w, stride, padding, groups):
    """Seven nested loops, float64 accumulation."""
    N, C, T, H, W = x.shape
    O, CG, KT, KH, KW = w.shape
    st, sh, sw = stride
    pt, ph, pw = padding
    OT = (T + 2 * pt - KT) // st + 1
    OH = (H + 2 * ph - KH) // sh + 1
    OW = (W + 2 * pw - KW) // sw + 1
    OG = O // groups
    out = np.zeros((N, O, OT, OH, OW), dtype=np.float64)
    for n in range(N):
        for o in range(O):
            g = o // OG
            for ot in range(OT):
                for oh in range(OH):
                    for ow in range(OW):
                        acc = 0.0
                        for ci in range(CG):
                            c = g * CG + ci
                            for kt in range(KT):
                                it = ot * st - pt + kt
                                if not 0 <= it < T:
                                    continue
                                for kh in range(KH):
                                    ih = oh * sh - ph + kh
                                    if not 0 <= ih < H:
                                        continue
                                    for kw in range(KW):
                                        iw = ow * sw - pw + kw
                                        if 0 <= iw < W:
                                            acc += float(x[n, c, it, ih, iw]) * float(w[o, ci, kt, kh, kw])
                        out[n, o, ot, oh, ow] = acc
    return out


def table_complexity(frames, res, conv1, widths, inner, depths, conv5, *,
                     se=True, channelwise=True, classes=400, head=2048):
    """Multiply-adds and parameters straight from a Table-3 style layout.

    Walks stage by stage with its own size arithmetic; shares no code with
    the package cost model.
    """
    flops = 0
    params = 0
    s = (res - 1) // 2 + 1  # 3x3 stride 2 pad 1
    flops += frames * s * s * conv1 * 3 * 9 + frames * s * s * conv1 * 3
    params += conv1 * 27 + conv1 * 3 + 2 * conv1
    c_in = conv1
    for stage, (c_out, b, d) in enumerate(zip(widths, inner, depths)):
        for i in range(d):
            stride = 2 if i == 0 else 1
            s_out = (s - 1) // stride + 1
            a = frames * s * s * c_in * b
            kb = 27 if channelwise else 27 * b
            bb = frames * s_out * s_out * b * kb
            c = frames * s_out * s_out * b * c_out
            flops += a + bb + c
            params += c_in * b + b * kb + b * c_out + 2 * (b + b + c_out)
            if se and i % 2 == 0:
                r = max(1, math.floor(b / 16))
                params += 2 * b * r + r + b
            if c_in != c_out or stride != 1:
                flops += frames * s_out * s_out * c_in * c_out
                params += c_in * c_out + 2 * c_out
            c_in, s = c_out, s_out
    flops += frames * s * s * c_in * conv5 + conv5 * head + head * classes
    params += c_in * conv5 + 2 * conv5 + conv5 * head + head * classes + classes
    return flops, params
