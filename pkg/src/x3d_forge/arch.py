"""Expansion factors and deterministic instantiation of X3D architectures.

Every network in the family is described by six expansion factors applied to
a tiny single-frame base (X2D). :func:`instantiate` resolves factors into an
:class:`ArchSpec` with all rounding applied, so downstream code (cost model,
reference engine, serializers) never has to deal with fractional geometry.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Tuple

BASE_RESOLUTION = 112
BASE_WIDTHS = (12, 24, 48, 96)
BASE_DEPTHS = (1, 2, 5, 3)
STAGE_NAMES = ("res2", "res3", "res4", "res5")
WIDTH_DIVISOR = 8


class Axis(str, enum.Enum):
    FAST = "fast"
    TEMPORAL = "temporal"
    SPATIAL = "spatial"
    DEPTH = "depth"
    WIDTH = "width"
    BOTTLENECK = "bottleneck"


# Tie-break order used by the expansion loop when scores and params are equal.
AXIS_ORDER = (
    Axis.BOTTLENECK,
    Axis.TEMPORAL,
    Axis.FAST,
    Axis.SPATIAL,
    Axis.DEPTH,
    Axis.WIDTH,
)


class ArchError(ValueError):
    """Raised when factors or a config cannot produce a valid network."""


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _unit_cumulative() -> Dict[str, float]:
    return {a.value: 1.0 for a in Axis}


@dataclass(frozen=True)
class ExpansionFactors:
    """The six expansion knobs.

    ``gamma_w`` is expressed in units where 1.0 reproduces the X2D widths
    (conv1 width 24). ``cumulative`` tracks how far each axis has been
    expanded along a search trajectory; criteria read it, the architecture
    does not.
    """

    gamma_tau: float = 1.0
    gamma_t: float = 1.0
    gamma_s: float = 1.0
    gamma_w: float = 1.0
    gamma_b: float = 1.0
    gamma_d: float = 1.0
    cumulative: Mapping[str, float] = field(default_factory=_unit_cumulative)

    def __post_init__(self):
        cum = _unit_cumulative()
        for key, value in dict(self.cumulative).items():
            key = Axis(key).value
            cum[key] = float(value)
        object.__setattr__(self, "cumulative", cum)

    def as_tuple(self) -> Tuple[float, ...]:
        return (
            self.gamma_tau,
            self.gamma_t,
            self.gamma_s,
            self.gamma_w,
            self.gamma_b,
            self.gamma_d,
        )

    def check(self) -> None:
        names = ("gamma_tau", "gamma_t", "gamma_s", "gamma_w", "gamma_b", "gamma_d")
        for name, value in zip(names, self.as_tuple()):
            if not (value > 0 and math.isfinite(value)):
                raise ArchError(f"{name} must be a positive finite number, got {value!r}")
        for axis, value in self.cumulative.items():
            if not value >= 1.0:
                raise ArchError(f"cumulative[{axis}] must be >= 1, got {value!r}")

    def with_factors(self, **changes) -> "ExpansionFactors":
        return replace(self, **changes)

    def __hash__(self):
        return hash((self.as_tuple(), tuple(sorted(self.cumulative.items()))))


FACTOR_NAMES = ("gamma_tau", "gamma_t", "gamma_s", "gamma_w", "gamma_b", "gamma_d")


@dataclass(frozen=True)
class CountConvention:
    """Which layer categories contribute to FLOPs and parameter totals."""

    flop_categories: Tuple[str, ...] = ("conv", "fc")
    param_categories: Tuple[str, ...] = ("conv", "fc", "se", "norm")


@dataclass(frozen=True)
class ArchConfig:
    num_classes: int = 400
    head_width: int = 2048
    use_channelwise: bool = True
    use_se: bool = True
    se_every: int = 2
    se_ratio: float = 1.0 / 16
    use_swish: bool = True
    count_convention: CountConvention = CountConvention()
    # Smallest res5 feature map accepted by instantiate.
    min_res5_size: int = 4

    def check(self) -> None:
        if self.num_classes < 1 or self.head_width < 1:
            raise ArchError("num_classes and head_width must be positive")
        if not (0 < self.se_ratio <= 1):
            raise ArchError(f"se_ratio must lie in (0, 1], got {self.se_ratio}")
        if self.se_every < 1:
            raise ArchError(f"se_every must be >= 1, got {self.se_every}")
        if self.min_res5_size < 1:
            raise ArchError("min_res5_size must be >= 1")


@dataclass(frozen=True)
class InputGeometry:
    frames: int
    stride: int
    resolution: int


@dataclass(frozen=True)
class BlockSpec:
    in_width: int
    bottleneck_width: int
    out_width: int
    spatial_stride: int = 1
    temporal_stride: int = 1
    has_se: bool = False
    se_width: int = 0
    has_projection_shortcut: bool = False


@dataclass(frozen=True)
class StageSpec:
    name: str
    block_count: int
    out_width: int
    bottleneck_width: int
    blocks: Tuple[BlockSpec, ...]
    first_block_spatial_stride: int = 2


@dataclass(frozen=True)
class Conv1Spec:
    width: int
    in_channels: int = 3
    spatial_kernel: int = 3
    spatial_stride: int = 2
    temporal_kernel: int = 3


@dataclass(frozen=True)
class HeadSpec:
    conv5_width: int
    fc1_width: int
    classes: int


@dataclass(frozen=True)
class ArchFlags:
    channelwise: bool = True
    se: bool = True
    se_every: int = 2
    se_ratio: float = 1.0 / 16
    swish: bool = True


@dataclass(frozen=True)
class ArchSpec:
    input: InputGeometry
    conv1: Conv1Spec
    stages: Tuple[StageSpec, ...]
    head: HeadSpec
    flags: ArchFlags
    factors: Optional[ExpansionFactors] = None

    def iter_blocks(self):
        for stage in self.stages:
            for index, block in enumerate(stage.blocks):
                yield stage.name, index, block

    def layer_widths(self):
        """Everything that determines parameters, nothing that determines input size."""
        return (
            self.conv1.width,
            tuple((s.block_count, s.out_width, s.bottleneck_width) for s in self.stages),
            tuple(b for _, _, b in self.iter_blocks()),
            self.head,
            self.flags,
        )


def round_width(base_width: int, multiplier: float, divisor: int = WIDTH_DIVISOR) -> int:
    """Scale a channel count and snap it to a multiple of ``divisor``.

    The snapped value never drops more than 10% below the exact product.
    """
    if base_width < 1 or not multiplier > 0:
        raise ArchError("round_width needs base_width >= 1 and multiplier > 0")
    exact = base_width * multiplier
    width = max(divisor, int(exact + divisor / 2) // divisor * divisor)
    if width < 0.9 * exact:
        width += divisor
    return int(width)


def round_depth(base_repeats: int, gamma_d: float) -> int:
    if base_repeats < 1 or not gamma_d > 0:
        raise ArchError("round_depth needs base_repeats >= 1 and gamma_d > 0")
    # Guard against 5 * 2.2 = 11.000000000000002 style float noise.
    return int(math.ceil(round(base_repeats * gamma_d, 9)))


def round_resolution(pixels: float, divisor: int = WIDTH_DIVISOR) -> int:
    """Nearest multiple of ``divisor`` (half-up), at least ``divisor``."""
    return max(divisor, round_half_up(pixels / divisor) * divisor)


def conv_out_size(size: int, kernel: int, stride: int) -> int:
    pad = (kernel - 1) // 2
    return (size + 2 * pad - kernel) // stride + 1


def resolve_input_geometry(
    factors: ExpansionFactors, resolution: Optional[int] = None
) -> InputGeometry:
    """Integer clip geometry for ``factors``.

    ``resolution`` overrides the default spatial rounding; presets whose
    published crop is not reproducible by rounding pass it explicitly.
    """
    frames = max(1, round_half_up(factors.gamma_t))
    stride = max(1, round_half_up(factors.gamma_tau))
    if resolution is None:
        resolution = round_resolution(BASE_RESOLUTION * factors.gamma_s)
    return InputGeometry(frames=frames, stride=stride, resolution=int(resolution))


def instantiate(
    factors: ExpansionFactors,
    config: Optional[ArchConfig] = None,
    *,
    resolution: Optional[int] = None,
) -> ArchSpec:
    """Resolve expansion factors into a complete layer-level description.

    Args:
        factors: the six expansion factors.
        config: head size, mobile components and counting convention.
        resolution: explicit input crop, bypassing the default rounding.

    Returns:
        A fully integer ArchSpec.

    Raises:
        ArchError: if the factors are invalid or the activations would
            collapse below ``config.min_res5_size`` pixels at res5.
    """
    config = config or ArchConfig()
    factors.check()
    config.check()
    geometry = resolve_input_geometry(factors, resolution)
    if geometry.frames < 1:
        raise ArchError("temporal size collapsed below one frame")

    size = conv_out_size(geometry.resolution, 3, 2)
    for _ in STAGE_NAMES:
        size = conv_out_size(size, 3, 2)
    if size < config.min_res5_size:
        raise ArchError(
            f"input {geometry.resolution}px leaves a {size}px res5 map "
            f"(minimum {config.min_res5_size})"
        )

    multiplier = 2.0 * factors.gamma_w
    widths = [round_width(b, multiplier) for b in BASE_WIDTHS]
    depths = [round_depth(d, factors.gamma_d) for d in BASE_DEPTHS]
    conv1 = Conv1Spec(width=widths[0])

    stages: List[StageSpec] = []
    in_width = conv1.width
    for name, width, depth in zip(STAGE_NAMES, widths, depths):
        inner = max(1, round_half_up(width * factors.gamma_b))
        blocks = []
        for index in range(depth):
            stride = 2 if index == 0 else 1
            has_se = config.use_se and index % config.se_every == 0
            se_width = max(1, int(math.floor(inner * config.se_ratio))) if has_se else 0
            blocks.append(
                BlockSpec(
                    in_width=in_width,
                    bottleneck_width=inner,
                    out_width=width,
                    spatial_stride=stride,
                    has_se=has_se,
                    se_width=se_width,
                    has_projection_shortcut=(in_width != width or stride != 1),
                )
            )
            in_width = width
        stages.append(
            StageSpec(
                name=name,
                block_count=depth,
                out_width=width,
                bottleneck_width=inner,
                blocks=tuple(blocks),
            )
        )

    head = HeadSpec(
        conv5_width=max(1, round_half_up(widths[-1] * factors.gamma_b)),
        fc1_width=config.head_width,
        classes=config.num_classes,
    )
    flags = ArchFlags(
        channelwise=config.use_channelwise,
        se=config.use_se,
        se_every=config.se_every,
        se_ratio=config.se_ratio,
        swish=config.use_swish,
    )
    return ArchSpec(
        input=geometry,
        conv1=conv1,
        stages=tuple(stages),
        head=head,
        flags=flags,
        factors=factors,
    )


def validate(spec: ArchSpec) -> List[str]:
    """Human-readable list of invariant violations; empty when the spec is sound."""
    problems: List[str] = []
    geo = spec.input
    if min(geo.frames, geo.stride, geo.resolution) < 1:
        problems.append(f"input geometry must be positive, got {geo}")
    if spec.conv1.width < 1:
        problems.append("conv1 width must be positive")
    if len(spec.stages) != len(STAGE_NAMES):
        problems.append(f"expected {len(STAGE_NAMES)} stages, got {len(spec.stages)}")

    prev_width = spec.conv1.width
    for stage in spec.stages:
        where = stage.name
        if stage.block_count != len(stage.blocks) or stage.block_count < 1:
            problems.append(f"{where}: block_count {stage.block_count} != {len(stage.blocks)} blocks")
        if stage.out_width < 1:
            problems.append(f"{where}: out_width must be positive")
        if stage.bottleneck_width < 1:
            problems.append(f"{where}: bottleneck_width must be positive")
        strided = [i for i, b in enumerate(stage.blocks) if b.spatial_stride != 1]
        if strided != [0] or (stage.blocks and stage.blocks[0].spatial_stride != 2):
            problems.append(f"{where}: exactly one spatial stride-2 (first block) required")
        for i, block in enumerate(stage.blocks):
            tag = f"{where}.{i}"
            if block.temporal_stride != 1:
                problems.append(f"{tag}: temporal stride {block.temporal_stride} (no temporal downsampling)")
            if block.bottleneck_width < 1 and stage.bottleneck_width >= 1:
                problems.append(f"{tag}: bottleneck_width must be positive")
            if block.in_width != prev_width:
                problems.append(f"{tag}: in_width {block.in_width} != previous width {prev_width}")
            if block.out_width != stage.out_width:
                problems.append(f"{tag}: out_width differs from stage")
            needs_proj = block.in_width != block.out_width or block.spatial_stride != 1
            if block.has_projection_shortcut != needs_proj:
                problems.append(f"{tag}: projection shortcut flag inconsistent")
            if block.has_se and block.se_width < 1:
                problems.append(f"{tag}: SE block needs a positive reduction width")
            prev_width = block.out_width
    if min(spec.head.conv5_width, spec.head.fc1_width, spec.head.classes) < 1:
        problems.append("head widths must be positive")
    return problems


@dataclass(frozen=True)
class Preset:
    name: str
    factors: ExpansionFactors
    resolution: Optional[int] = None
    # Width factor as printed in the published table caption (base-12 units).
    paper_gamma_w: Optional[float] = None


SQRT2 = math.sqrt(2.0)

PRESETS: Dict[str, Preset] = {
    "X2D": Preset("X2D", ExpansionFactors(), paper_gamma_w=1.0),
    "X3D-XS": Preset(
        "X3D-XS",
        ExpansionFactors(gamma_tau=12, gamma_t=4, gamma_s=SQRT2, gamma_b=2.25, gamma_d=2.2),
    ),
    "X3D-S": Preset(
        "X3D-S",
        ExpansionFactors(gamma_tau=6, gamma_t=13, gamma_s=SQRT2, gamma_b=2.25, gamma_d=2.2),
        paper_gamma_w=1.0,
    ),
    "X3D-M": Preset(
        "X3D-M",
        ExpansionFactors(gamma_tau=5, gamma_t=16, gamma_s=2.0, gamma_b=2.25, gamma_d=2.2),
        paper_gamma_w=1.0,
    ),
    "X3D-XL": Preset(
        "X3D-XL",
        ExpansionFactors(
            gamma_tau=5, gamma_t=16, gamma_s=2 * SQRT2, gamma_w=1.45, gamma_b=2.25, gamma_d=5.0
        ),
        resolution=312,
        paper_gamma_w=2.9,
    ),
}


def get_preset(name: str) -> Preset:
    key = name.strip().upper()
    for preset_name, preset in PRESETS.items():
        if preset_name.upper() == key:
            return preset
    raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")


def preset_spec(name: str, config: Optional[ArchConfig] = None) -> ArchSpec:
    preset = get_preset(name)
    return instantiate(preset.factors, config, resolution=preset.resolution)
