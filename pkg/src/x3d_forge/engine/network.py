"""Deterministic inference-only forward pass for an :class:`ArchSpec`."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional

import numpy as np

from ..arch import ArchSpec, BlockSpec
from . import ops


@dataclass
class WeightBundle:
    seed: int
    layers: Dict[str, Dict[str, np.ndarray]] = field(default_factory=dict)

    def element_count(self) -> int:
        return sum(a.size for arrays in self.layers.values() for a in arrays.values())

    def block(self, prefix: str) -> Dict[str, Dict[str, np.ndarray]]:
        keys = ("a", "b", "se", "c", "shortcut")
        return {k: self.layers[f"{prefix}.{k}"] for k in keys if f"{prefix}.{k}" in self.layers}

    def equals(self, other: "WeightBundle") -> bool:
        if self.layers.keys() != other.layers.keys():
            return False
        for key, arrays in self.layers.items():
            theirs = other.layers[key]
            if arrays.keys() != theirs.keys():
                return False
            if not all(np.array_equal(arrays[k], theirs[k]) for k in arrays):
                return False
        return True


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    # zero-mean, unit-variance uniform scaled by 1/sqrt(fan_in)
    bound = np.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


def _affine(channels: int) -> Dict[str, np.ndarray]:
    return {"scale": np.ones(channels, np.float32), "shift": np.zeros(channels, np.float32)}


def init_weights(spec: ArchSpec, seed: int) -> WeightBundle:
    """Pseudo-random weights for every layer of ``spec``; same seed, same bits."""
    rng = np.random.default_rng(np.random.SeedSequence(int(seed) & (2**64 - 1)))
    bundle = WeightBundle(seed=int(seed))
    L = bundle.layers

    c1 = spec.conv1
    L["conv1"] = {
        "spatial": _uniform(rng, (c1.width, c1.in_channels, 1, 3, 3), c1.in_channels * 9),
        "temporal": _uniform(rng, (c1.width, 1, 3, 1, 1), 3),
        **_affine(c1.width),
    }
    for stage_name, index, block in spec.iter_blocks():
        prefix = f"{stage_name}.{index}"
        inner = block.bottleneck_width
        L[f"{prefix}.a"] = {
            "weight": _uniform(rng, (inner, block.in_width, 1, 1, 1), block.in_width),
            **_affine(inner),
        }
        per_group = 1 if spec.flags.channelwise else inner
        L[f"{prefix}.b"] = {
            "weight": _uniform(rng, (inner, per_group, 3, 3, 3), per_group * 27),
            **_affine(inner),
        }
        if block.has_se:
            r = block.se_width
            L[f"{prefix}.se"] = {
                "reduce_w": _uniform(rng, (r, inner), inner),
                "reduce_b": _uniform(rng, (r,), inner),
                "expand_w": _uniform(rng, (inner, r), r),
                "expand_b": _uniform(rng, (inner,), r),
            }
        L[f"{prefix}.c"] = {
            "weight": _uniform(rng, (block.out_width, inner, 1, 1, 1), inner),
            **_affine(block.out_width),
        }
        if block.has_projection_shortcut:
            L[f"{prefix}.shortcut"] = {
                "weight": _uniform(rng, (block.out_width, block.in_width, 1, 1, 1), block.in_width),
                **_affine(block.out_width),
            }
    head = spec.head
    last = spec.stages[-1].out_width
    L["conv5"] = {"weight": _uniform(rng, (head.conv5_width, last, 1, 1, 1), last), **_affine(head.conv5_width)}
    L["fc1"] = {"weight": _uniform(rng, (head.fc1_width, head.conv5_width), head.conv5_width)}
    L["fc2"] = {
        "weight": _uniform(rng, (head.classes, head.fc1_width), head.fc1_width),
        "bias": _uniform(rng, (head.classes,), head.fc1_width),
    }
    return bundle


def _record(trace, layer_id, x):
    if trace is not None:
        n, c, t, h, w = x.shape
        trace.append((layer_id, t, h, w, c))


def block_forward(
    block: BlockSpec,
    x: np.ndarray,
    weights: Mapping[str, Mapping[str, np.ndarray]],
    *,
    swish: bool = True,
    threads: Optional[int] = None,
    trace: Optional[list] = None,
    prefix: str = "block",
) -> np.ndarray:
    """One residual bottleneck block.

    1x1^2 conv, norm, swish, channel-wise 3x3^2 conv (spatial stride), norm,
    optional SE, swish, 1x1^2 conv, norm, add shortcut, ReLU. ``swish=False``
    substitutes ReLU at both swish positions.
    """
    if x.shape[1] != block.in_width:
        raise ValueError(f"{prefix}: expected {block.in_width} channels, got {x.shape[1]}")
    act = ops.swish if swish else ops.relu
    wa, wb, wc = weights["a"], weights["b"], weights["c"]

    y = ops.conv3d(x, wa["weight"], threads=threads)
    _record(trace, f"{prefix}.a", y)
    y = act(ops.norm(y, wa["scale"], wa["shift"]))

    inner = block.bottleneck_width
    groups = inner if wb["weight"].shape[1] == 1 else 1
    s = block.spatial_stride
    y = ops.conv3d(y, wb["weight"], (block.temporal_stride, s, s), (1, 1, 1), groups, threads=threads)
    _record(trace, f"{prefix}.b", y)
    y = ops.norm(y, wb["scale"], wb["shift"])
    if block.has_se:
        se = weights["se"]
        y = ops.squeeze_excite(y, se["reduce_w"], se["reduce_b"], se["expand_w"], se["expand_b"])
    y = act(y)

    y = ops.conv3d(y, wc["weight"], threads=threads)
    _record(trace, f"{prefix}.c", y)
    y = ops.norm(y, wc["scale"], wc["shift"])

    if block.has_projection_shortcut:
        ws = weights["shortcut"]
        short = ops.conv3d(x, ws["weight"], (1, s, s), threads=threads)
        _record(trace, f"{prefix}.shortcut", short)
        short = ops.norm(short, ws["scale"], ws["shift"])
    else:
        short = x
    return ops.relu(y + short)


def _check_clip(spec: ArchSpec, clip: np.ndarray) -> None:
    geo = spec.input
    expected = (spec.conv1.in_channels, geo.frames, geo.resolution, geo.resolution)
    if clip.ndim != 5 or tuple(clip.shape[1:]) != expected:
        raise ValueError(f"clip shape {clip.shape} does not match spec geometry (N,) + {expected}")


def _trunk(spec, weights, clip, threads, trace):
    _check_clip(spec, clip)
    x = np.asarray(clip, dtype=np.float32)
    c1 = weights.layers["conv1"]
    x = ops.conv3d(x, c1["spatial"], (1, 2, 2), (0, 1, 1), threads=threads)
    _record(trace, "conv1.spatial", x)
    x = ops.conv3d(x, c1["temporal"], (1, 1, 1), (1, 0, 0), groups=spec.conv1.width, threads=threads)
    _record(trace, "conv1.temporal", x)
    x = ops.relu(ops.norm(x, c1["scale"], c1["shift"]))
    for stage_name, index, block in spec.iter_blocks():
        prefix = f"{stage_name}.{index}"
        x = block_forward(
            block, x, weights.block(prefix),
            swish=spec.flags.swish, threads=threads, trace=trace, prefix=prefix,
        )
    c5 = weights.layers["conv5"]
    x = ops.conv3d(x, c5["weight"], threads=threads)
    _record(trace, "conv5", x)
    return ops.relu(ops.norm(x, c5["scale"], c5["shift"]))


def features(spec: ArchSpec, weights: WeightBundle, clip, *, threads=None, trace=None) -> np.ndarray:
    """Globally pooled conv5 activations, shape (N, conv5_width)."""
    return ops.global_pool(_trunk(spec, weights, clip, threads, trace))


def head(weights: WeightBundle, feats: np.ndarray) -> np.ndarray:
    hidden = ops.relu(ops.linear(feats, weights.layers["fc1"]["weight"]))
    fc2 = weights.layers["fc2"]
    return ops.linear(hidden, fc2["weight"], fc2["bias"])


def forward(
    spec: ArchSpec,
    weights: WeightBundle,
    clip,
    *,
    threads: Optional[int] = None,
    trace: Optional[List[tuple]] = None,
) -> np.ndarray:
    """Logits of shape (N, num_classes).

    If ``trace`` is a list, (layer_id, T, H, W, C) is appended for every
    convolution output, in the same order as ``cost.propagate_shapes``.
    """
    return head(weights, features(spec, weights, clip, threads=threads, trace=trace))
