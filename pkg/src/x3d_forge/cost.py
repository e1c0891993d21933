"""Analytical multiply-add and parameter counting for :class:`ArchSpec`.

Counts are exact integers. One fused multiply-add is one FLOP; only the
categories named in the spec's count convention contribute (conv and fc
multiply-adds by default, every learnable tensor for parameters).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple

from .arch import (
    ArchConfig,
    ArchError,
    ArchSpec,
    CountConvention,
    conv_out_size,
    round_resolution,
)

CATEGORIES = ("conv", "fc", "se", "norm")


@dataclass(frozen=True)
class ShapeEntry:
    layer_id: str
    out_T: int
    out_H: int
    out_W: int
    out_C: int


@dataclass(frozen=True)
class LayerCost:
    layer_id: str
    scope: str
    category: str
    flops: int
    params: int


@dataclass
class ComplexityReport:
    flops_madds: int
    params: int
    per_stage: Dict[str, Dict[str, int]] = field(default_factory=dict)
    per_category: Dict[str, Dict[str, int]] = field(default_factory=dict)
    shapes: List[ShapeEntry] = field(default_factory=list)


class InferenceStrategy(str, enum.Enum):
    CENTER = "center"
    LEFT_CENTER_RIGHT = "lcr"


@dataclass(frozen=True)
class InferenceCost:
    per_view_flops: int
    views: int
    total: int
    crop: int


def _conv(layer_id, scope, t, h, w, c_in, c_out, k, groups=1) -> LayerCost:
    kt, kh, kw = k
    weights = c_out * (c_in // groups) * kt * kh * kw
    return LayerCost(layer_id, scope, "conv", t * h * w * weights, weights)


def _norm(layer_id, scope, channels) -> LayerCost:
    return LayerCost(layer_id, scope, "norm", 0, 2 * channels)


def _walk(spec: ArchSpec, resolution: Optional[int] = None) -> Iterator[Tuple[LayerCost, Optional[ShapeEntry]]]:
    """Every counted layer in forward order, with its output shape if it has one."""
    T = spec.input.frames
    size = spec.input.resolution if resolution is None else resolution
    if T < 1 or size < 1:
        raise ArchError(f"degenerate input {T}x{size}^2")

    c1 = spec.conv1
    size = conv_out_size(size, c1.spatial_kernel, c1.spatial_stride)
    yield (
        _conv("conv1.spatial", "conv1", T, size, size, c1.in_channels, c1.width, (1, 3, 3)),
        ShapeEntry("conv1.spatial", T, size, size, c1.width),
    )
    yield (
        _conv("conv1.temporal", "conv1", T, size, size, c1.width, c1.width, (3, 1, 1), groups=c1.width),
        ShapeEntry("conv1.temporal", T, size, size, c1.width),
    )
    yield _norm("conv1.norm", "conv1", c1.width), None

    for stage_name, index, block in spec.iter_blocks():
        prefix = f"{stage_name}.{index}"
        inner = block.bottleneck_width
        yield (
            _conv(f"{prefix}.a", stage_name, T, size, size, block.in_width, inner, (1, 1, 1)),
            ShapeEntry(f"{prefix}.a", T, size, size, inner),
        )
        yield _norm(f"{prefix}.a_norm", stage_name, inner), None
        out_size = conv_out_size(size, 3, block.spatial_stride)
        if out_size < 1:
            raise ArchError(f"{prefix}: spatial size collapsed to zero")
        groups = inner if spec.flags.channelwise else 1
        yield (
            _conv(f"{prefix}.b", stage_name, T, out_size, out_size, inner, inner, (3, 3, 3), groups),
            ShapeEntry(f"{prefix}.b", T, out_size, out_size, inner),
        )
        yield _norm(f"{prefix}.b_norm", stage_name, inner), None
        if block.has_se:
            r = block.se_width
            yield LayerCost(f"{prefix}.se", stage_name, "se", 0, inner * r + r + r * inner + inner), None
        yield (
            _conv(f"{prefix}.c", stage_name, T, out_size, out_size, inner, block.out_width, (1, 1, 1)),
            ShapeEntry(f"{prefix}.c", T, out_size, out_size, block.out_width),
        )
        yield _norm(f"{prefix}.c_norm", stage_name, block.out_width), None
        if block.has_projection_shortcut:
            yield (
                _conv(f"{prefix}.shortcut", stage_name, T, out_size, out_size,
                      block.in_width, block.out_width, (1, 1, 1)),
                ShapeEntry(f"{prefix}.shortcut", T, out_size, out_size, block.out_width),
            )
            yield _norm(f"{prefix}.shortcut_norm", stage_name, block.out_width), None
        size = out_size

    head = spec.head
    last = spec.stages[-1].out_width
    yield (
        _conv("conv5", "head", T, size, size, last, head.conv5_width, (1, 1, 1)),
        ShapeEntry("conv5", T, size, size, head.conv5_width),
    )
    yield _norm("conv5.norm", "head", head.conv5_width), None
    # fc1 carries no bias (a 1x1 conv feeding ReLU); fc2 is the biased classifier.
    fc1 = head.conv5_width * head.fc1_width
    yield LayerCost("fc1", "head", "fc", fc1, fc1), None
    fc2 = head.fc1_width * head.classes
    yield LayerCost("fc2", "head", "fc", fc2, fc2 + head.classes), None


def layer_costs(spec: ArchSpec, resolution: Optional[int] = None) -> List[LayerCost]:
    return [layer for layer, _ in _walk(spec, resolution)]


def propagate_shapes(spec: ArchSpec, resolution: Optional[int] = None) -> List[ShapeEntry]:
    """Output size of every conv layer, using out = floor((in + 2p - k)/s) + 1."""
    return [shape for _, shape in _walk(spec, resolution) if shape is not None]


def _convention(spec: ArchSpec, convention: Optional[CountConvention]) -> CountConvention:
    return convention or CountConvention()


def count_flops(
    spec: ArchSpec,
    convention: Optional[CountConvention] = None,
    *,
    resolution: Optional[int] = None,
) -> int:
    keep = _convention(spec, convention).flop_categories
    return sum(l.flops for l in layer_costs(spec, resolution) if l.category in keep)


def count_params(spec: ArchSpec, convention: Optional[CountConvention] = None) -> int:
    keep = _convention(spec, convention).param_categories
    return sum(l.params for l in layer_costs(spec) if l.category in keep)


def report(spec: ArchSpec, convention: Optional[CountConvention] = None) -> ComplexityReport:
    conv = _convention(spec, convention)
    layers = layer_costs(spec)
    per_stage: Dict[str, Dict[str, int]] = {}
    per_category: Dict[str, Dict[str, int]] = {c: {"flops": 0, "params": 0} for c in CATEGORIES}
    for layer in layers:
        flops = layer.flops if layer.category in conv.flop_categories else 0
        params = layer.params if layer.category in conv.param_categories else 0
        stage = per_stage.setdefault(layer.scope, {"flops": 0, "params": 0})
        stage["flops"] += flops
        stage["params"] += params
        per_category[layer.category]["flops"] += flops
        per_category[layer.category]["params"] += params
    return ComplexityReport(
        flops_madds=sum(v["flops"] for v in per_category.values()),
        params=sum(v["params"] for v in per_category.values()),
        per_stage=per_stage,
        per_category=per_category,
        shapes=propagate_shapes(spec),
    )


def lcr_crop(spec: ArchSpec) -> int:
    """Crop side used by LeftCenterRight testing (128/112 of the train crop)."""
    if spec.factors is not None:
        return round_resolution(128 * spec.factors.gamma_s)
    return round_resolution(spec.input.resolution * 128 / 112)


def inference_cost(
    spec: ArchSpec,
    strategy: InferenceStrategy | str = InferenceStrategy.CENTER,
    clips: int = 10,
    convention: Optional[CountConvention] = None,
) -> InferenceCost:
    """Per-view and total multiply-adds for multi-view video-level testing."""
    if clips < 1:
        raise ValueError(f"clips must be >= 1, got {clips}")
    strategy = InferenceStrategy(strategy)
    if strategy is InferenceStrategy.CENTER:
        crop = spec.input.resolution
        views = clips
    else:
        crop = lcr_crop(spec)
        views = 3 * clips
    per_view = count_flops(spec, convention, resolution=crop)
    return InferenceCost(per_view_flops=per_view, views=views, total=per_view * views, crop=crop)


def flops_cost(config: Optional[ArchConfig] = None):
    """Cost function over expansion factors for the search loop."""
    from .arch import instantiate

    config = config or ArchConfig()

    def cost(factors) -> int:
        return count_flops(instantiate(factors, config), config.count_convention)

    return cost
