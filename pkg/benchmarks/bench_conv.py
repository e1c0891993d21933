"""Compare the compiled conv kernel with the numpy fallback.

    python benchmarks/bench_conv.py [--repeat 5] [--threads 1 4]

Layer shapes come from the X3D-S res3 stage at batch 1. Prints one row per
(layer, backend, threads) with the best wall time and effective GFLOP/s.
"""

import argparse
import time

import numpy as np

from x3d_forge.engine import backend, conv3d

# name, channels in, channels out, groups, kernel, stride, input (T, H, W)
LAYERS = [
    ("pointwise 48->108", 48, 108, 1, (1, 1, 1), (1, 1, 1), (13, 20, 20)),
    ("channelwise 3x3x3", 108, 108, 108, (3, 3, 3), (1, 1, 1), (13, 20, 20)),
    ("channelwise stride 2", 108, 108, 108, (3, 3, 3), (1, 2, 2), (13, 40, 40)),
    ("conv1 spatial 1x3x3", 3, 24, 1, (1, 3, 3), (1, 2, 2), (13, 160, 160)),
]


def madds(cin, cout, groups, kernel, out_shape):
    return cout * (cin // groups) * int(np.prod(kernel)) * int(np.prod(out_shape))


def bench(fn, repeat):
    fn()
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--threads", type=int, nargs="+", default=[1, backend.default_threads()])
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    print(f"default backend: {backend.NAME}; available: {', '.join(sorted(backend.BACKENDS))}")
    print(f"{'layer':24} {'backend':8} {'threads':>7} {'ms':>9} {'GFLOP/s':>8} {'speedup':>8}")
    for name, cin, cout, groups, kernel, stride, size in LAYERS:
        x = rng.standard_normal((1, cin, *size)).astype(np.float32)
        w = rng.standard_normal((cout, cin // groups, *kernel)).astype(np.float32)
        pad = tuple(k // 2 for k in kernel)
        ref = conv3d(x, w, stride, pad, groups, backend="python")
        work = madds(cin, cout, groups, kernel, ref.shape[2:])
        base = None
        for be in sorted(backend.BACKENDS, reverse=True):  # python first
            for threads in sorted(set(args.threads)) if be == "native" else [1]:
                out = conv3d(x, w, stride, pad, groups, backend=be, threads=threads)
                assert np.allclose(out, ref, atol=1e-3), f"{be} disagrees on {name}"
                t = bench(lambda: conv3d(x, w, stride, pad, groups, backend=be, threads=threads), args.repeat)
                base = base or t
                print(f"{name:24} {be:8} {threads:7d} {t * 1e3:9.2f} {work / t / 1e9:8.2f} {base / t:7.1f}x")


if __name__ == "__main__":
    main()
