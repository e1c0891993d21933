"""Closed-form synthetic goodness over cumulative per-axis expansion."""

from __future__ import annotations

from typing import Mapping

from ..arch import Axis, ExpansionFactors

DEFAULT_BETAS = {
    Axis.FAST: 0.7,
    Axis.TEMPORAL: 0.9,
    Axis.SPATIAL: 0.8,
    Axis.WIDTH: 0.5,
    Axis.BOTTLENECK: 1.0,
    Axis.DEPTH: 0.4,
}


def uniform_weights() -> dict:
    return {a: 1.0 / len(Axis) for a in Axis}


def analytic_oracle(
    factors: ExpansionFactors,
    weights: Mapping[Axis, float],
    betas: Mapping[Axis, float],
) -> float:
    """Sum of w_a * (1 - E_a ** -beta_a); 0 at the base, strictly below 1."""
    score = 0.0
    for axis in Axis:
        magnitude = factors.cumulative[axis.value]
        if magnitude < 1.0:
            raise ValueError(f"cumulative[{axis.value}] = {magnitude} < 1")
        score += weights[axis] * (1.0 - magnitude ** (-betas[axis]))
    return score
