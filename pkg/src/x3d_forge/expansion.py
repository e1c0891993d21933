"""Progressive forward expansion and backward contraction over the six axes.

Each step multiplies the current cost by ``c_hat``: every enabled axis is
expanded on its own until it reaches that cost, the criterion scores each
candidate, and the best one is kept.
"""

from __future__ import annotations

import enum
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .arch import (
    AXIS_ORDER,
    ArchConfig,
    ArchError,
    Axis,
    ExpansionFactors,
    instantiate,
    resolve_input_geometry,
    round_half_up,
)

logger = logging.getLogger(__name__)

CostFn = Callable[[ExpansionFactors], int]
ScoreFn = Callable[[ExpansionFactors], float]

# Cost slack allowed after rounding when matching a knob to its target.
POST_ROUNDING_TOLERANCE = 0.2
GRID_POINTS = 64
# Stride multiplier of X-Temporal at its nominal knob of 2.
TEMPORAL_STRIDE_AT_2X = 0.75


class ExpansionError(RuntimeError):
    pass


class InfeasibleAxisError(ExpansionError):
    def __init__(self, axis, message, best_knob=None, best_cost=None):
        super().__init__(message)
        self.axis = axis
        self.best_knob = best_knob
        self.best_cost = best_cost


class Regime(enum.Enum):
    XS = 0.6e9
    S = 2e9
    M = 5e9
    L = 20e9
    XL = 40e9
    XXL = 150e9

    @property
    def bound(self) -> int:
        return int(self.value)

    @classmethod
    def parse(cls, name: str) -> "Regime":
        key = name.strip().upper().replace("X3D-", "")
        try:
            return cls[key]
        except KeyError:
            raise ValueError(f"unknown regime {name!r}; choose from {[r.name for r in cls]}") from None


@dataclass(frozen=True)
class ExpansionSettings:
    c_hat: float = 2.0
    epsilon: float = 0.05
    enabled_axes: Tuple[Axis, ...] = AXIS_ORDER
    tie_break: Tuple[Axis, ...] = AXIS_ORDER
    max_steps: int = 20
    knob_max: Optional[float] = None
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "enabled_axes", tuple(Axis(a) for a in self.enabled_axes))
        tie = tuple(Axis(a) for a in self.tie_break)
        tie += tuple(a for a in AXIS_ORDER if a not in tie)
        object.__setattr__(self, "tie_break", tie)
        if not self.c_hat > 1:
            raise ValueError(f"c_hat must exceed 1, got {self.c_hat}")
        if not 0 < self.epsilon < 0.5:
            raise ValueError(f"epsilon must lie in (0, 0.5), got {self.epsilon}")
        if self.max_steps < 0:
            raise ValueError("max_steps must be >= 0")
        if not self.enabled_axes:
            raise ValueError("at least one axis must be enabled")

    @property
    def grid_max(self) -> float:
        return self.knob_max if self.knob_max is not None else self.c_hat ** 3


@dataclass(frozen=True)
class Candidate:
    axis: Axis
    knob: float
    factors: Optional[ExpansionFactors]
    cost: Optional[int]
    params: Optional[int]
    score: Optional[float]
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class ExpansionStep:
    axis: Axis
    knob: float
    factors_after: ExpansionFactors
    cost_flops: int
    params: int
    score: float
    candidates: Dict[Axis, Candidate] = field(default_factory=dict)


@dataclass
class Trajectory:
    start: ExpansionFactors
    start_cost: int
    start_params: int
    start_score: float
    steps: List[ExpansionStep] = field(default_factory=list)
    settings: ExpansionSettings = field(default_factory=ExpansionSettings)
    criterion_id: str = ""

    def points(self) -> List[Tuple[ExpansionFactors, int]]:
        return [(self.start, self.start_cost)] + [(s.factors_after, s.cost_flops) for s in self.steps]

    def truncated(self, n_steps: int) -> "Trajectory":
        return Trajectory(
            self.start, self.start_cost, self.start_params, self.start_score,
            list(self.steps[:n_steps]), self.settings, self.criterion_id,
        )


def apply_axis(factors: ExpansionFactors, axis: Axis | str, knob: float) -> ExpansionFactors:
    """Expand one axis by a continuous knob (knob = 1 is the identity).

    Fast trades stride for frames at constant duration; Temporal grows the
    frame count by ``knob`` while the stride shrinks geometrically through
    0.75 at knob 2; Spatial scales the pixel count (side by sqrt(knob)).
    """
    axis = Axis(axis)
    if not knob >= 1.0:
        raise ValueError(f"knob must be >= 1, got {knob}")
    f = factors
    changes = {}
    if axis is Axis.FAST:
        new_tau = f.gamma_tau / knob
        if round_half_up(new_tau) < 1:
            raise InfeasibleAxisError(axis, f"frame stride {new_tau:.3g} rounds below 1")
        changes = {"gamma_tau": new_tau, "gamma_t": f.gamma_t * knob}
    elif axis is Axis.TEMPORAL:
        stride_mult = TEMPORAL_STRIDE_AT_2X ** math.log2(knob)
        changes = {"gamma_t": f.gamma_t * knob, "gamma_tau": f.gamma_tau * stride_mult}
    elif axis is Axis.SPATIAL:
        changes = {"gamma_s": f.gamma_s * math.sqrt(knob)}
    elif axis is Axis.DEPTH:
        changes = {"gamma_d": f.gamma_d * knob}
    elif axis is Axis.WIDTH:
        changes = {"gamma_w": f.gamma_w * knob}
    elif axis is Axis.BOTTLENECK:
        changes = {"gamma_b": f.gamma_b * knob}
    if knob == 1.0:
        return factors
    cumulative = dict(f.cumulative)
    cumulative[axis.value] *= knob
    return f.with_factors(cumulative=cumulative, **changes)


@dataclass(frozen=True)
class KnobSolution:
    knob: float
    achieved_cost: int


def _log_gap(cost, target):
    return abs(math.log(cost / target))


def solve_knob(
    factors: ExpansionFactors,
    axis: Axis | str,
    target_cost: int,
    costfn: CostFn,
    settings: Optional[ExpansionSettings] = None,
) -> KnobSolution:
    """Find the knob whose cost is closest to ``target_cost`` in log space.

    A 64-point grid over [1, knob_max] brackets the target, then bisection
    walks to the discrete cost step. Ties go to the smaller knob.

    Raises:
        InfeasibleAxisError: no knob lands within 20% of the target.
    """
    axis = Axis(axis)
    settings = settings or ExpansionSettings()
    base = costfn(factors)
    if not target_cost > base:
        raise ValueError(f"target {target_cost} must exceed current cost {base}")

    def cost_at(k):
        try:
            return costfn(apply_axis(factors, axis, k))
        except (InfeasibleAxisError, ArchError):
            return None

    kmax = settings.grid_max
    grid = [1.0 + (kmax - 1.0) * i / (GRID_POINTS - 1) for i in range(GRID_POINTS)]
    tried: List[Tuple[float, int]] = [(1.0, base)]
    prev = 1.0
    for k in grid[1:]:
        c = cost_at(k)
        if c is None:
            continue
        tried.append((k, c))
        if c >= target_cost:
            lo, hi = prev, k
            for _ in range(64):
                mid = 0.5 * (lo + hi)
                if mid <= lo or mid >= hi:
                    break
                cm = cost_at(mid)
                if cm is None:
                    lo = mid
                    continue
                if cm >= target_cost:
                    hi = mid
                else:
                    lo = mid
            for kk in (lo, hi):
                ck = cost_at(kk)
                if ck is not None:
                    tried.append((kk, ck))
            break
        prev = k

    feasible = [(k, c) for k, c in tried if c > 0]
    knob, achieved = min(feasible, key=lambda kc: (_log_gap(kc[1], target_cost), kc[0]))
    if abs(achieved / target_cost - 1.0) > POST_ROUNDING_TOLERANCE or knob == 1.0:
        raise InfeasibleAxisError(
            axis,
            f"{axis.value}: best cost {achieved} at knob {knob:.4g} misses target {target_cost}",
            best_knob=knob,
            best_cost=achieved,
        )
    return KnobSolution(knob=knob, achieved_cost=achieved)


def default_paramfn(config: Optional[ArchConfig] = None):
    from .cost import count_params

    config = config or ArchConfig()
    return lambda f: count_params(instantiate(f, config), config.count_convention)


def _criterion_id(criterion) -> str:
    return getattr(criterion, "criterion_id", None) or getattr(criterion, "__name__", type(criterion).__name__)


def _candidate_axes(factors: ExpansionFactors, settings: ExpansionSettings) -> List[Axis]:
    axes = [a for a in settings.tie_break if a in settings.enabled_axes]
    single_frame = resolve_input_geometry(factors).frames == 1
    if single_frame and Axis.FAST in axes and Axis.TEMPORAL in axes:
        # Both just go from one frame to several: a single merged candidate.
        axes.remove(Axis.FAST)
    return axes


def _evaluate(factors, axis, step_target, criterion, costfn, paramfn, settings) -> Candidate:
    try:
        sol = solve_knob(factors, axis, step_target, costfn, settings)
        expanded = apply_axis(factors, axis, sol.knob)
        score = float(criterion(expanded))
        if math.isnan(score):
            raise ValueError("criterion returned NaN")
        return Candidate(axis, sol.knob, expanded, sol.achieved_cost, int(paramfn(expanded)), score)
    except (ExpansionError, ArchError, ValueError, ArithmeticError, RuntimeError) as exc:
        logger.info("axis %s failed: %s", axis.value, exc)
        return Candidate(axis, math.nan, None, None, None, None, error=f"{type(exc).__name__}: {exc}")


def forward_expand(
    start: ExpansionFactors,
    target_cost: int,
    criterion: ScoreFn,
    costfn: CostFn,
    settings: Optional[ExpansionSettings] = None,
    *,
    paramfn: Optional[Callable[[ExpansionFactors], int]] = None,
    on_step: Optional[Callable[[int, ExpansionStep], None]] = None,
) -> Trajectory:
    """Greedy single-axis expansion until ``target_cost`` or ``max_steps``.

    Args:
        start: initial factors (usually X2D).
        target_cost: stop once the kept candidate reaches this cost.
        criterion: goodness J; higher is better. Must be pure.
        costfn: complexity C in integer multiply-adds.
        settings: step size, tolerances, axes, tie-break order.
        paramfn: parameter count used for tie-breaking and logs.
        on_step: hook called after every kept step (the regularization
            expansion slot; it must not alter the trajectory).

    Returns:
        The trajectory with every evaluated candidate recorded.
    """
    settings = settings or ExpansionSettings()
    paramfn = paramfn or default_paramfn()
    if settings.max_steps == 0:
        raise ExpansionError("nothing to expand: max_steps is 0")
    cost = costfn(start)
    if not cost < target_cost:
        raise ExpansionError(f"start cost {cost} already reaches target {target_cost}")

    traj = Trajectory(
        start=start,
        start_cost=int(cost),
        start_params=int(paramfn(start)),
        start_score=float(criterion(start)),
        settings=settings,
        criterion_id=_criterion_id(criterion),
    )
    order = {a: i for i, a in enumerate(settings.tie_break)}
    current = start
    while cost < target_cost and len(traj.steps) < settings.max_steps:
        step_target = int(round(settings.c_hat * cost))
        axes = _candidate_axes(current, settings)
        args = (current, step_target, criterion, costfn, paramfn, settings)
        if settings.workers > 1 and len(axes) > 1:
            with ThreadPoolExecutor(max_workers=settings.workers) as pool:
                results = list(pool.map(lambda a: _evaluate(args[0], a, *args[1:]), axes))
        else:
            results = [_evaluate(current, a, *args[1:]) for a in axes]
        candidates = {c.axis: c for c in results}
        ok = [c for c in results if c.ok]
        if not ok:
            detail = "; ".join(c.error for c in results)
            raise ExpansionError(f"step {len(traj.steps) + 1}: every axis failed ({detail})")
        best = min(ok, key=lambda c: (-c.score, c.params, order[c.axis]))
        step = ExpansionStep(
            axis=best.axis,
            knob=best.knob,
            factors_after=best.factors,
            cost_flops=best.cost,
            params=best.params,
            score=best.score,
            candidates=candidates,
        )
        traj.steps.append(step)
        logger.info(
            "step %d: %s x%.4g -> %.4g GFLOPs, score %.4f",
            len(traj.steps), best.axis.value, best.knob, best.cost / 1e9, best.score,
        )
        if on_step is not None:
            on_step(len(traj.steps), step)
        current, cost = best.factors, best.cost
    return traj


def backward_contract(
    trajectory: Trajectory,
    target_cost: int,
    costfn: CostFn,
    epsilon: Optional[float] = None,
) -> ExpansionFactors:
    """Shrink the last step's knob until the cost fits ``target_cost * (1 + epsilon)``.

    Returns the contracted factors; the last step is returned unchanged when
    it already fits within ``target_cost``.
    """
    if not trajectory.steps:
        raise ExpansionError("cannot contract an empty trajectory")
    eps = trajectory.settings.epsilon if epsilon is None else epsilon
    last = trajectory.steps[-1]
    if len(trajectory.steps) >= 2:
        prev_factors, prev_cost = trajectory.steps[-2].factors_after, trajectory.steps[-2].cost_flops
    else:
        prev_factors, prev_cost = trajectory.start, trajectory.start_cost
    if last.cost_flops <= target_cost:
        return last.factors_after
    if target_cost < prev_cost:
        raise ExpansionError(
            f"target {target_cost} is below the previous step's cost {prev_cost}; contract earlier"
        )
    limit = target_cost * (1.0 + eps)
    lo, hi = 1.0, last.knob
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        try:
            fits = costfn(apply_axis(prev_factors, last.axis, mid)) <= limit
        except (InfeasibleAxisError, ArchError):
            fits = False
        if fits:
            lo = mid
        else:
            hi = mid
    return apply_axis(prev_factors, last.axis, lo)


def select_instance(
    trajectory: Trajectory,
    regime: Regime | str,
    costfn: CostFn,
    *,
    contract: bool = True,
) -> ExpansionFactors:
    """Largest trajectory point inside the regime bound.

    When the following point overshoots, it is contracted onto the bound
    (hard bound, no epsilon slack) unless ``contract`` is False.
    """
    regime = Regime.parse(regime) if isinstance(regime, str) else regime
    bound = regime.bound
    points = trajectory.points()
    if points[0][1] > bound:
        raise ExpansionError(f"regime {regime.name} bound {bound} is below the start cost {points[0][1]}")
    kept = max(i for i, (_, c) in enumerate(points) if c <= bound)
    factors, cost = points[kept]
    if not contract or kept == len(points) - 1 or cost == bound:
        return factors
    # points[kept + 1] is steps[kept]
    return backward_contract(trajectory.truncated(kept + 1), bound, costfn, epsilon=0.0)


def check_trajectory(traj: Trajectory, ratio_band: Tuple[float, float] = (1.6, 2.4)) -> List[str]:
    """Violations of the trajectory invariants (argmax choice, cost growth)."""
    problems = []
    order = {a: i for i, a in enumerate(traj.settings.tie_break)}
    prev_cost = traj.start_cost
    for i, step in enumerate(traj.steps, 1):
        ok = [c for c in step.candidates.values() if c.ok]
        best = min(ok, key=lambda c: (-c.score, c.params, order[c.axis])) if ok else None
        if best is None or best.axis != step.axis:
            problems.append(f"step {i}: chosen axis {step.axis.value} is not the argmax")
        elif step.score < max(c.score for c in ok):
            problems.append(f"step {i}: score below best candidate")
        ratio = step.cost_flops / prev_cost
        if not ratio_band[0] <= ratio <= ratio_band[1]:
            problems.append(f"step {i}: cost ratio {ratio:.3f} outside {ratio_band}")
        prev_cost = step.cost_flops
    return problems
