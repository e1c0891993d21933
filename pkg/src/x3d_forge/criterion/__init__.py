"""Pluggable goodness functions for the expansion loop."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

from ..arch import ArchConfig, Axis, ExpansionFactors
from .analytic import DEFAULT_BETAS, analytic_oracle, uniform_weights
from .random_feature import ActivationBudgetError, random_feature_eval
from .replay import MissingReplayKey, ReplayTableError, load_table, replay
from .synthetic import SyntheticDatasetSpec, generate_dataset

VARIANTS = ("analytic", "replay", "random_feature")


class CriterionError(RuntimeError):
    pass


@dataclass(frozen=True)
class CriterionSpec:
    variant: str = "analytic"
    seed: int = 0
    weights: Mapping[Axis, float] = field(default_factory=uniform_weights)
    betas: Mapping[Axis, float] = field(default_factory=lambda: dict(DEFAULT_BETAS))
    table_path: Optional[str] = None
    dataset: SyntheticDatasetSpec = field(default_factory=SyntheticDatasetSpec)
    dataset_seed: Optional[int] = None
    ridge_lambda: float = 1e-2
    arch_config: ArchConfig = field(default_factory=lambda: ArchConfig(min_res5_size=1))
    threads: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "weights", {Axis(k): float(v) for k, v in dict(self.weights).items()})
        object.__setattr__(self, "betas", {Axis(k): float(v) for k, v in dict(self.betas).items()})

    def check(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown criterion variant {self.variant!r}; choose from {VARIANTS}")
        if set(self.weights) != set(Axis) or set(self.betas) != set(Axis):
            raise ValueError("weights and betas need one entry per axis")
        if any(w < 0 for w in self.weights.values()) or not math.isclose(sum(self.weights.values()), 1.0):
            raise ValueError("criterion weights must be non-negative and sum to 1")
        if any(not b > 0 for b in self.betas.values()):
            raise ValueError("criterion exponents must be positive")
        if not self.ridge_lambda > 0:
            raise ValueError("ridge lambda must be positive")
        if self.variant == "replay" and not self.table_path:
            raise ValueError("replay criterion needs table_path")


class Criterion:
    """Callable J(factors) -> score with a stable identifier. All variants are pure."""

    pure = True

    def __init__(self, spec: CriterionSpec):
        spec.check()
        self.spec = spec
        self._table = load_table(spec.table_path) if spec.variant == "replay" else None

    @property
    def criterion_id(self) -> str:
        s = self.spec
        if s.variant == "replay":
            return f"replay:{s.table_path}"
        if s.variant == "random_feature":
            return f"random_feature:seed={s.seed}:lambda={s.ridge_lambda}"
        return f"analytic:seed={s.seed}"

    def __call__(self, factors: ExpansionFactors) -> float:
        s = self.spec
        try:
            if s.variant == "analytic":
                return analytic_oracle(factors, s.weights, s.betas)
            if s.variant == "replay":
                return replay(self._table, factors)
            return random_feature_eval(
                factors, s.arch_config, s.dataset, s.seed, s.ridge_lambda,
                dataset_seed=s.dataset_seed, threads=s.threads,
            )
        except (MissingReplayKey, ActivationBudgetError) as exc:
            raise CriterionError(str(exc)) from exc


def make_criterion(spec: CriterionSpec) -> Criterion:
    return Criterion(spec)


__all__ = [
    "ActivationBudgetError",
    "Criterion",
    "CriterionError",
    "CriterionSpec",
    "MissingReplayKey",
    "ReplayTableError",
    "SyntheticDatasetSpec",
    "analytic_oracle",
    "generate_dataset",
    "make_criterion",
    "random_feature_eval",
    "replay",
]
