"""Planner: goal semantics, search behaviour, oracle agreement, soundness."""

import itertools

import numpy as np
import pytest

from overtake_mc.grid import Action, GridState, Lane, in_danger_zone, replay
from overtake_mc.planner import (
    NoPath,
    Plan,
    PlannerMode,
    SearchLimits,
    oracle_plan_exists,
    plan,
    plan_with_fallback,
    select_mode,
    validate_plan,
)

LLC, ACC, RLC, DRV, BRK = (
    Action.LEFT_LANE_CHANGE,
    Action.ACCELERATE,
    Action.RIGHT_LANE_CHANGE,
    Action.DRIVE,
    Action.BRAKE,
)

# First solution found by the reference search for the single-vehicle fixture.
GOLDEN_FV12 = (ACC, RLC, ACC, ACC, LLC)


def sweep_snapshots():
    """Exhaustive r <= 2 family: FV in 11..18, OV absent or 11..27."""
    fv_sets = [()] + [(a,) for a in range(11, 19)]
    fv_sets += list(itertools.combinations(range(11, 19), 2))
    for fvs in fv_sets:
        for ov in [None, *range(11, 28)]:
            for lane in (Lane.LEFT, Lane.RIGHT):
                for lcc in (0, 3):
                    yield GridState(lane, fvs, ov, lcc)


def test_final_plan_single_vehicle_golden():
    result = plan(GridState(Lane.LEFT, (12,)), PlannerMode.FINAL)
    assert isinstance(result, Plan)
    assert result.actions == GOLDEN_FV12
    trace = replay(GridState(Lane.LEFT, (12,)), result.actions)
    assert trace[-1].overtaken and not trace[-1].crashed


def test_final_plan_is_deterministic():
    results = [plan(GridState(Lane.LEFT, (12, 15), 20), PlannerMode.FINAL) for _ in range(3)]
    assert all(isinstance(r, Plan) for r in results)
    assert len({r.actions for r in results}) == 1
    assert len({r.states_expanded for r in results}) == 1


def test_plan_rejects_terminal_snapshot():
    with pytest.raises(ValueError):
        plan(GridState(Lane.LEFT, (10,)), PlannerMode.FINAL)
    crashed = GridState(Lane.LEFT, (12,), crashed=True)
    with pytest.raises(ValueError):
        plan(crashed, PlannerMode.FINAL)


def test_fully_blocked_snapshot_has_no_path_in_both_modes():
    # Oncoming adjacent, landing cells occupied: every action crashes or is
    # barred, in FINAL and in the zone-free preparations model alike.
    boxed = GridState(Lane.RIGHT, (10, 11, 12), 11)
    result = plan_with_fallback(boxed)
    assert isinstance(result, NoPath)
    assert result.reason == "both_failed"
    assert tuple(a.reason for a in result.attempts) == ("exhausted", "exhausted")
    assert result.attempts[0].mode is PlannerMode.FINAL
    assert result.attempts[1].mode is PlannerMode.PREPARATIONS_A


def test_waiting_lets_the_oncoming_vehicle_pass():
    # Three consecutive front vehicles with the oncoming vehicle close: the
    # AV can hold the Left lane until the oncoming vehicle passes, then
    # overtake.  Search and oracle must agree the goal is reachable.
    snap = GridState(Lane.LEFT, (11, 12, 13), 12)
    result = plan(snap, PlannerMode.FINAL)
    assert isinstance(result, Plan)
    assert oracle_plan_exists(snap, PlannerMode.FINAL, 64)
    trace = replay(snap, result.actions)
    assert trace[-1].overtaken
    assert all(not s.crashed for s in trace)


def test_select_mode_by_lane():
    assert select_mode(GridState(Lane.RIGHT, (12,)), True) is PlannerMode.PREPARATIONS_A
    assert select_mode(GridState(Lane.LEFT, (12,)), True) is PlannerMode.PREPARATIONS_B
    with pytest.raises(ValueError):
        select_mode(GridState(Lane.LEFT, (12,)), False)


def test_preparations_a_retreats_to_left_gap():
    # Boxed on the right with the danger zone in the way: the preparations
    # model lifts the zone and brakes back into the left-lane gap.
    snap = GridState(Lane.RIGHT, (11, 13), 14)
    result = plan(snap, PlannerMode.PREPARATIONS_A)
    assert isinstance(result, Plan)
    trace = replay(snap, result.actions)
    assert trace[-1].av_lane is Lane.LEFT
    assert not trace[-1].crashed
    assert all(f not in (9, 10, 11) for f in trace[-1].front_vehicles)


def test_preparations_b_closes_the_gap():
    result = plan(GridState(Lane.LEFT, (14,)), PlannerMode.PREPARATIONS_B)
    assert isinstance(result, Plan)
    assert result.actions == (ACC, ACC)
    final = replay(GridState(Lane.LEFT, (14,)), result.actions)[-1]
    assert final.front_vehicles == (12,)


def test_preparations_b_goal_already_satisfied_returns_empty_plan():
    result = plan(GridState(Lane.LEFT, (12,)), PlannerMode.PREPARATIONS_B)
    assert isinstance(result, Plan)
    assert result.actions == ()


def test_fallback_unused_when_final_succeeds():
    result = plan_with_fallback(GridState(Lane.LEFT, (12,)))
    assert isinstance(result, Plan)
    assert result.mode is PlannerMode.FINAL


def test_fallback_selects_case_a_from_right_lane():
    # FINAL is blocked by the danger zone but the zone-free model escapes
    # by braking back into the left-lane gap.
    snap = GridState(Lane.RIGHT, (11, 13), 14)
    final = plan(snap, PlannerMode.FINAL)
    assert isinstance(final, NoPath)
    result = plan_with_fallback(snap)
    assert isinstance(result, Plan)
    assert result.mode is PlannerMode.PREPARATIONS_A


def test_depth_bound_reported():
    snap = GridState(Lane.LEFT, (14,))
    result = plan(snap, PlannerMode.FINAL, SearchLimits(depth_bound=2))
    assert isinstance(result, NoPath)
    assert result.reason == "depth_bound"


def test_state_bound_reported():
    snap = GridState(Lane.LEFT, (11, 12, 13), 27)
    result = plan(snap, PlannerMode.FINAL, SearchLimits(max_states=3))
    assert isinstance(result, NoPath)
    assert result.reason == "state_bound"


def test_oracle_spec_examples():
    assert oracle_plan_exists(GridState(Lane.LEFT, (12,)), PlannerMode.FINAL, 64)
    boxed = GridState(Lane.RIGHT, (10, 11, 12), 11)
    assert not oracle_plan_exists(boxed, PlannerMode.FINAL, 64)


def test_plan_iff_oracle_on_exhaustive_sweep():
    limits = SearchLimits()
    checked = 0
    for snap in sweep_snapshots():
        for mode in PlannerMode:
            found = isinstance(plan(snap, mode, limits), Plan)
            exists = oracle_plan_exists(snap, mode, limits.depth_bound)
            assert found == exists, (snap, mode)
            checked += 1
    assert checked == 7992


def test_no_lane_flip_flop_on_sweep():
    # Testable form of the "sensible path" ordering bias: no returned
    # FINAL-mode plan immediately undoes a left lane change.
    limits = SearchLimits()
    for snap in sweep_snapshots():
        result = plan(snap, PlannerMode.FINAL, limits)
        if isinstance(result, Plan):
            pairs = zip(result.actions, result.actions[1:])
            assert (LLC, RLC) not in pairs, (snap, result.actions)


def random_snapshots(n, seed=20240817):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        lane = Lane.LEFT if rng.random() < 0.7 else Lane.RIGHT
        r = int(rng.integers(0, 4))
        fvs = tuple(sorted(rng.choice(np.arange(11, 28), size=r, replace=False).tolist()))
        ov = None if rng.random() < 0.4 else int(rng.integers(11, 28))
        lcc = int(rng.integers(0, 3))
        snap = GridState(lane, fvs, ov, lcc)
        out.append(snap)
    return out


def test_final_plans_replay_safely_on_random_snapshots():
    limits = SearchLimits()
    returned = 0
    for snap in random_snapshots(2000):
        result = plan(snap, PlannerMode.FINAL, limits)
        if not isinstance(result, Plan):
            continue
        returned += 1
        trace = replay(snap, result.actions, limits.max_lane_changes)
        assert trace[-1].overtaken
        assert all(not s.crashed for s in trace)
        assert all(not in_danger_zone(s) for s in trace[1:])
        lane_changes = sum(1 for a in result.actions if a in (LLC, RLC))
        assert lane_changes <= limits.max_lane_changes
    assert returned > 1000


def test_validate_plan_accepts_returned_plans():
    snap = GridState(Lane.LEFT, (12, 14), 20)
    result = plan(snap, PlannerMode.FINAL)
    assert isinstance(result, Plan)
    assert validate_plan(snap, result.actions, PlannerMode.FINAL)


def test_validate_plan_rejects_unsafe_suffix():
    # A plan valid for an empty right lane is not valid once an oncoming
    # vehicle would sit in the danger zone when the AV pulls out.
    snap = GridState(Lane.LEFT, (12,))
    result = plan(snap, PlannerMode.FINAL)
    closer = GridState(Lane.LEFT, (12,), 16)
    assert not validate_plan(closer, result.actions, PlannerMode.FINAL)


def test_validate_plan_without_goal_requirement():
    snap = GridState(Lane.LEFT, (14,), 27)
    assert validate_plan(snap, (DRV, DRV), PlannerMode.FINAL, require_goal=False)
    assert not validate_plan(snap, (DRV, DRV), PlannerMode.FINAL, require_goal=True)
