"""Inference-mode layer primitives on (N, C, T, H, W) float32 arrays."""

from __future__ import annotations

import numpy as np

from .backend import conv3d_raw

NORM_EPS = 1e-5


def conv3d(x, kernel, stride=(1, 1, 1), padding=(0, 0, 0), groups=1, *, threads=None, backend=None):
    """Zero-padded cross-correlation.

    Args:
        x: input of shape (N, C, T, H, W).
        kernel: weights of shape (C_out, C_in // groups, kT, kH, kW).
        stride: (s_t, s_h, s_w).
        padding: (p_t, p_h, p_w), applied symmetrically.
        groups: channel groups; ``groups == C_in`` is channel-wise.

    Returns:
        float32 array of shape (N, C_out, T', H', W').
    """
    x = np.asarray(x)
    kernel = np.asarray(kernel)
    if x.ndim != 5 or kernel.ndim != 5:
        raise ValueError(f"conv3d expects 5-d input and kernel, got {x.shape} and {kernel.shape}")
    if x.shape[1] != kernel.shape[1] * groups:
        raise ValueError(
            f"input has {x.shape[1]} channels but kernel expects {kernel.shape[1]} x {groups} groups"
        )
    return conv3d_raw(x, kernel, stride, padding, groups, threads=threads, backend=backend)


def norm(x, scale, shift):
    """Normalization with identity running statistics (mean 0, variance 1)."""
    inv = np.float32(1.0 / np.sqrt(1.0 + NORM_EPS))
    s = (scale.astype(np.float32) * inv)[None, :, None, None, None]
    return x * s + shift.astype(np.float32)[None, :, None, None, None]


def relu(x):
    return np.maximum(x, np.float32(0))


def sigmoid(x):
    x = np.asarray(x, dtype=np.float32)
    return np.float32(0.5) * (np.tanh(np.float32(0.5) * x) + np.float32(1))


def swish(x):
    return x * sigmoid(x)


def global_pool(x):
    """Mean over (T, H, W) -> (N, C)."""
    n, c = x.shape[:2]
    return x.reshape(n, c, -1).mean(axis=2, dtype=np.float32)


def linear(z, weight, bias=None):
    out = z.astype(np.float32) @ weight.astype(np.float32).T
    if bias is not None:
        out = out + bias.astype(np.float32)
    return out.astype(np.float32)


def squeeze_excite(x, reduce_w, reduce_b, expand_w, expand_b):
    gate = sigmoid(linear(relu(linear(global_pool(x), reduce_w, reduce_b)), expand_w, expand_b))
    return x * gate[:, :, None, None, None]
