"""Pure-numpy direct convolution, used when the compiled kernel is unavailable.

Samples are processed one at a time so that a sample's arithmetic never
depends on batch size or on how samples are spread over worker threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np


def _conv_one(x, w, stride, padding, groups, out_shape):
    C, T, H, W = x.shape
    O, CG, KT, KH, KW = w.shape
    st, sh, sw = stride
    OT, OH, OW = out_shape
    xp = np.pad(x, ((0, 0),) + tuple((p, p) for p in padding))
    out = np.zeros((O, OT, OH, OW), dtype=np.float32)
    OG = O // groups
    depthwise = groups == C and CG == 1
    for kt in range(KT):
        for kh in range(KH):
            for kw in range(KW):
                window = xp[
                    :,
                    kt : kt + st * (OT - 1) + 1 : st,
                    kh : kh + sh * (OH - 1) + 1 : sh,
                    kw : kw + sw * (OW - 1) + 1 : sw,
                ]
                tap = w[:, :, kt, kh, kw]
                if depthwise:
                    # one input channel per group, OG outputs each
                    src = np.repeat(window, OG, axis=0) if OG > 1 else window
                    out += tap[:, 0, None, None, None] * src
                elif groups == 1:
                    out += np.tensordot(tap, window, axes=([1], [0]))
                else:
                    for g in range(groups):
                        out[g * OG : (g + 1) * OG] += np.tensordot(
                            tap[g * OG : (g + 1) * OG], window[g * CG : (g + 1) * CG], axes=([1], [0])
                        )
    return out


def conv3d(x, w, stride, padding, groups, num_threads=1):
    N, C, T, H, W = x.shape
    O, CG, KT, KH, KW = w.shape
    if groups < 1 or C % groups or O % groups or C // groups != CG:
        raise ValueError("channel/group mismatch in conv3d")
    out_shape = tuple(
        (size + 2 * p - k) // s + 1
        for size, p, k, s in zip((T, H, W), padding, (KT, KH, KW), stride)
    )
    if min(out_shape) < 1:
        raise ValueError("conv3d output would be empty")
    out = np.empty((N, O) + out_shape, dtype=np.float32)

    def run(n):
        out[n] = _conv_one(x[n], w, stride, padding, groups, out_shape)

    if num_threads > 1 and N > 1:
        with ThreadPoolExecutor(max_workers=num_threads) as pool:
            list(pool.map(run, range(N)))
    else:
        for n in range(N):
            run(n)
    return out
