"""Architecture family builder, complexity calculator and progressive
expansion search for efficient video networks."""

from .arch import (
    AXIS_ORDER,
    PRESETS,
    ArchConfig,
    ArchError,
    ArchSpec,
    Axis,
    CountConvention,
    ExpansionFactors,
    get_preset,
    instantiate,
    preset_spec,
    validate,
)
from .cost import (
    ComplexityReport,
    InferenceStrategy,
    count_flops,
    count_params,
    flops_cost,
    inference_cost,
    propagate_shapes,
    report,
)
from .expansion import (
    ExpansionError,
    ExpansionSettings,
    InfeasibleAxisError,
    Regime,
    Trajectory,
    backward_contract,
    forward_expand,
    select_instance,
    solve_knob,
)

__version__ = "0.1.0"

__all__ = [
    "AXIS_ORDER",
    "PRESETS",
    "ArchConfig",
    "ArchError",
    "ArchSpec",
    "Axis",
    "ComplexityReport",
    "CountConvention",
    "ExpansionError",
    "ExpansionFactors",
    "ExpansionSettings",
    "InfeasibleAxisError",
    "InferenceStrategy",
    "Regime",
    "Trajectory",
    "backward_contract",
    "count_flops",
    "count_params",
    "flops_cost",
    "forward_expand",
    "get_preset",
    "inference_cost",
    "instantiate",
    "preset_spec",
    "propagate_shapes",
    "report",
    "select_instance",
    "solve_knob",
    "validate",
]
