import math
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from x3d_forge.arch import AXIS_ORDER, Axis, ExpansionFactors, resolve_input_geometry
from x3d_forge.cost import flops_cost
from x3d_forge.criterion import CriterionSpec, make_criterion
from x3d_forge.expansion import (
    ExpansionError,
    ExpansionSettings,
    InfeasibleAxisError,
    Regime,
    apply_axis,
    backward_contract,
    check_trajectory,
    forward_expand,
    select_instance,
    solve_knob,
)
from x3d_forge.persist import dumps_trajectory

COST = flops_cost()
ANALYTIC = make_criterion(CriterionSpec())


@pytest.fixture(scope="module")
def xs_run():
    return forward_expand(ExpansionFactors(), Regime.XS.bound, ANALYTIC, COST)


def test_apply_axis_semantics():
    f = ExpansionFactors(gamma_tau=6, gamma_t=4)
    assert apply_axis(f, "fast", 2).as_tuple()[:2] == (3, 8)
    assert apply_axis(f, "temporal", 2).as_tuple()[:2] == pytest.approx((4.5, 8))
    assert apply_axis(f, "spatial", 2).gamma_s == pytest.approx(math.sqrt(2))
    assert apply_axis(f, "depth", 2).gamma_d == 2
    assert apply_axis(f, "width", 2).gamma_w == 2
    assert apply_axis(f, "bottleneck", 2).gamma_b == 2
    assert apply_axis(f, "width", 1.0) is f
    assert apply_axis(apply_axis(f, "depth", 2), "depth", 3).cumulative["depth"] == 6


def test_fast_axis_infeasible_at_unit_stride():
    with pytest.raises(InfeasibleAxisError):
        apply_axis(ExpansionFactors(), "fast", 4)


def test_apply_axis_rejects_shrinking_knob():
    with pytest.raises(ValueError):
        apply_axis(ExpansionFactors(), "depth", 0.5)


def test_solve_knob_on_linear_cost():
    cost = lambda f: int(round(1e9 * f.gamma_d))
    sol = solve_knob(ExpansionFactors(), "depth", int(1.5e9), cost)
    assert sol.knob == pytest.approx(1.5, rel=1e-6)


def test_solve_knob_reports_unreachable_target():
    cost = lambda f: int(1e9 * min(f.gamma_d, 1.2))
    with pytest.raises(InfeasibleAxisError) as info:
        solve_knob(ExpansionFactors(), "depth", int(2e9), cost)
    assert info.value.axis is Axis.DEPTH


def test_first_step_candidates_reach_common_cost():
    start = time.perf_counter()
    traj = forward_expand(ExpansionFactors(), 41_000_000, ANALYTIC, COST)
    assert time.perf_counter() - start < 10
    step = traj.steps[0]
    # Fast and Temporal collapse into one candidate on a single frame.
    assert set(step.candidates) == set(AXIS_ORDER) - {Axis.FAST}
    for cand in step.candidates.values():
        assert cand.ok
        assert cand.cost == pytest.approx(41.4e6, rel=0.10)
    assert step.axis is Axis.BOTTLENECK


def test_xs_run_takes_five_doubling_steps(xs_run):
    assert len(xs_run.steps) == 5
    assert check_trajectory(xs_run) == []
    scores = [xs_run.start_score] + [s.score for s in xs_run.steps]
    assert scores == sorted(scores) and len(set(scores)) == len(scores)


def test_rerun_is_byte_identical(xs_run):
    again = forward_expand(ExpansionFactors(), Regime.XS.bound, ANALYTIC, COST)
    assert dumps_trajectory(again) == dumps_trajectory(xs_run)


def test_parallel_candidates_match_serial(xs_run):
    par = forward_expand(
        ExpansionFactors(), Regime.XS.bound, ANALYTIC, COST, ExpansionSettings(workers=3)
    )
    assert dumps_trajectory(par).replace('"workers": 3', '"workers": 1') == dumps_trajectory(xs_run)


def test_contraction_lands_in_window(xs_run):
    target = Regime.XS.bound
    prev = xs_run.steps[-2].cost_flops
    contracted = backward_contract(xs_run, target, COST)
    assert prev < COST(contracted) <= 1.05 * target


def test_select_instance_hard_bound(xs_run):
    chosen = select_instance(xs_run, "XS", COST)
    assert xs_run.steps[-2].cost_flops < COST(chosen) <= Regime.XS.bound
    plain = select_instance(xs_run, Regime.XS, COST, contract=False)
    assert plain == xs_run.steps[-2].factors_after


def test_select_instance_below_start_fails(xs_run):
    assert select_instance(xs_run.truncated(0), Regime.XS, COST) == xs_run.start
    tiny = xs_run.truncated(1)
    tiny.start_cost = 10**12
    with pytest.raises(ExpansionError):
        select_instance(tiny, Regime.XS, COST)


def test_max_steps_zero_is_an_error():
    with pytest.raises(ExpansionError, match="nothing to expand"):
        forward_expand(ExpansionFactors(), Regime.S.bound, ANALYTIC, COST, ExpansionSettings(max_steps=0))


def test_start_already_over_target():
    with pytest.raises(ExpansionError):
        forward_expand(ExpansionFactors(), 1000, ANALYTIC, COST)


def test_constant_score_ties_break_on_params_then_order():
    traj = forward_expand(ExpansionFactors(), 41_000_000, lambda f: 0.5, COST)
    step = traj.steps[0]
    fewest = min(c.params for c in step.candidates.values())
    tied = [a for a in AXIS_ORDER if a in step.candidates and step.candidates[a].params == fewest]
    assert step.axis is tied[0]


def test_failing_axis_is_recorded_not_fatal():
    def crit(f):
        if f.cumulative["width"] > 1:
            raise RuntimeError("boom")
        return ANALYTIC(f)

    traj = forward_expand(ExpansionFactors(), 41_000_000, crit, COST)
    assert not traj.steps[0].candidates[Axis.WIDTH].ok


def test_every_axis_failing_raises():
    def crit(f):
        raise RuntimeError("boom")

    with pytest.raises(ExpansionError):
        forward_expand(ExpansionFactors(), 41_000_000, lambda f: 0.0 if f == ExpansionFactors() else crit(f), COST)


def test_regime_parse():
    assert Regime.parse("x3d-m") is Regime.M
    assert Regime.S.bound == 2_000_000_000
    with pytest.raises(ValueError):
        Regime.parse("huge")


def test_settings_validation():
    with pytest.raises(ValueError):
        ExpansionSettings(c_hat=1.0)
    with pytest.raises(ValueError):
        ExpansionSettings(enabled_axes=())
    assert ExpansionSettings(tie_break=("width",)).tie_break[0] is Axis.WIDTH


betas = st.floats(min_value=0.2, max_value=1.5)


@settings(max_examples=8, deadline=None)
@given(
    b=st.tuples(betas, betas, betas, betas, betas, betas),
    target=st.sampled_from([0.15e9, 0.3e9, 0.6e9]),
)
def test_trajectory_invariants_hold_for_random_oracles(b, target):
    crit = make_criterion(CriterionSpec(betas=dict(zip(Axis, b))))
    traj = forward_expand(ExpansionFactors(), int(target), crit, COST)
    assert check_trajectory(traj) == []
    scores = [traj.start_score] + [s.score for s in traj.steps]
    assert all(x < y for x, y in zip(scores, scores[1:]))
    assert traj.steps[-1].cost_flops >= target
    contracted = backward_contract(traj, int(target), COST)
    prev = traj.steps[-2].factors_after if len(traj.steps) > 1 else traj.start
    prev_cost = COST(prev)
    limit = 1.05 * target
    assert prev_cost <= COST(contracted) <= limit
    if COST(contracted) == prev_cost:
        # Only acceptable when rounding leaves no cost inside the window.
        last = traj.steps[-1]
        for i in range(1, 200):
            k = 1 + (last.knob - 1) * i / 200
            assert not prev_cost < COST(apply_axis(prev, last.axis, k)) <= limit
    for step in traj.steps:
        g = resolve_input_geometry(step.factors_after)
        assert g.frames >= 1 and g.stride >= 1


def test_nominal_fast_and_temporal_updates():
    fast = apply_axis(ExpansionFactors(), "fast", 2)
    assert (fast.gamma_tau, fast.gamma_t) == (0.5, 2)
    assert fast.gamma_tau * fast.gamma_t == 1
    temporal = apply_axis(ExpansionFactors(), "temporal", 2)
    assert (temporal.gamma_tau, temporal.gamma_t) == (0.75, 2)


def test_solve_knob_exact_on_monotone_stub():
    sol = solve_knob(ExpansionFactors(), "width", 2_000_000, lambda f: int(1e6 * f.gamma_w))
    assert sol.knob == 2.0 and sol.achieved_cost == 2_000_000


def test_bottleneck_first_step_cost():
    sol = solve_knob(ExpansionFactors(), "bottleneck", 2 * 20_670_000, COST)
    assert sol.achieved_cost == pytest.approx(41.4e6, rel=0.05)


def test_rigged_depth_oracle_always_picks_depth():
    traj = forward_expand(ExpansionFactors(), Regime.XS.bound, lambda f: f.cumulative["depth"], COST)
    assert [s.axis for s in traj.steps] == [Axis.DEPTH] * len(traj.steps)


def test_replay_table_trajectory_follows_table_argmax(tmp_path):
    from x3d_forge.criterion.replay import write_table

    preferred = [Axis.WIDTH, Axis.DEPTH]
    seen = {}

    def rigged(f):
        step = sum(1 for a in Axis if f.cumulative[a.value] > 1)
        score = step + (0.5 if step and f.cumulative[preferred[step - 1].value] > 1 else 0.0)
        seen[f] = score
        return score

    settings2 = ExpansionSettings(max_steps=2)
    forward_expand(ExpansionFactors(), Regime.XS.bound, rigged, COST, settings2)
    table_path = tmp_path / "table.csv"
    write_table(table_path, [(f, s) for f, s in seen.items()])
    crit = make_criterion(CriterionSpec(variant="replay", table_path=str(table_path)))
    traj = forward_expand(ExpansionFactors(), Regime.XS.bound, crit, COST, settings2)
    for step in traj.steps:
        best = max(c.score for c in step.candidates.values())
        assert step.score == best
    assert [s.axis for s in traj.steps] == preferred


def test_contract_temporal_step_onto_small_regime():
    start = ExpansionFactors(gamma_tau=6, gamma_t=10, gamma_s=2 ** 0.5, gamma_b=2.25, gamma_d=2.2)
    settings1 = ExpansionSettings(enabled_axes=("temporal",), max_steps=1)
    traj = forward_expand(start, Regime.S.bound, ANALYTIC, COST, settings1)
    assert traj.steps[-1].cost_flops > 2.4e9
    contracted = backward_contract(traj, Regime.S.bound, COST)
    assert start.gamma_t < contracted.gamma_t < traj.steps[-1].factors_after.gamma_t
    assert COST(contracted) <= 2.1e9


def test_contract_is_noop_at_last_cost(xs_run):
    last = xs_run.steps[-1]
    assert backward_contract(xs_run, last.cost_flops, COST) == last.factors_after


def test_contract_below_previous_step_fails(xs_run):
    with pytest.raises(ExpansionError):
        backward_contract(xs_run, xs_run.steps[-2].cost_flops - 1, COST)
