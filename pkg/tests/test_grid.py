"""Grid model: action deltas, predicates, replay, serialisation."""

import itertools

import pytest
from hypothesis import given, strategies as st

from overtake_mc.grid import (
    ACTION_DELTAS,
    AV_SEGMENT,
    CANONICAL_ORDER,
    GRID_MAX,
    Action,
    ActionDisabledError,
    GridState,
    Lane,
    LaneEffect,
    TerminalStateError,
    apply_action,
    format_state,
    in_danger_zone,
    is_crash,
    is_enabled,
    is_overtaken,
    key_state,
    parse_state,
    replay,
    state_key,
    successor_key,
)

LLC, ACC, RLC, DRV, BRK = (
    Action.LEFT_LANE_CHANGE,
    Action.ACCELERATE,
    Action.RIGHT_LANE_CHANGE,
    Action.DRIVE,
    Action.BRAKE,
)


def test_delta_table_is_fixed():
    assert ACTION_DELTAS[DRV].fv_delta == 0 and ACTION_DELTAS[DRV].ov_delta == -2
    assert ACTION_DELTAS[ACC].fv_delta == -1 and ACTION_DELTAS[ACC].ov_delta == -3
    assert ACTION_DELTAS[LLC].fv_delta == 0 and ACTION_DELTAS[LLC].ov_delta == -2
    assert ACTION_DELTAS[RLC].fv_delta == 0 and ACTION_DELTAS[RLC].ov_delta == -2
    assert ACTION_DELTAS[BRK].fv_delta == 1 and ACTION_DELTAS[BRK].ov_delta == -3
    assert ACTION_DELTAS[LLC].lane_effect is LaneEffect.TO_LEFT
    assert ACTION_DELTAS[RLC].lane_effect is LaneEffect.TO_RIGHT


def test_canonical_order():
    assert CANONICAL_ORDER == (LLC, ACC, RLC, DRV, BRK)


@pytest.mark.parametrize(
    "action, fvs, ov",
    [
        (ACC, (13,), 21),
        (DRV, (14,), 22),
        (RLC, (14,), 22),
        (BRK, (15,), 21),
    ],
)
def test_delta_examples_from_canonical_fixture(action, fvs, ov):
    state = GridState(Lane.LEFT, (14,), 24)
    result = apply_action(state, action)
    assert result.front_vehicles == fvs
    assert result.oncoming == ov


def test_accelerate_into_front_vehicle_is_crash():
    result = apply_action(GridState(Lane.LEFT, (11,)), ACC)
    assert result.crashed and not result.overtaken


def test_lane_change_updates_lane_and_budget():
    result = apply_action(GridState(Lane.LEFT, (14,), 24), RLC)
    assert result.av_lane is Lane.RIGHT
    assert result.lane_changes_used == 1
    back = apply_action(result, LLC)
    assert back.av_lane is Lane.LEFT
    assert back.lane_changes_used == 2


def test_disabled_actions_raise():
    with pytest.raises(ActionDisabledError):
        apply_action(GridState(Lane.LEFT, (14,)), LLC)
    with pytest.raises(ActionDisabledError):
        apply_action(GridState(Lane.RIGHT, (14,)), RLC)
    with pytest.raises(ActionDisabledError):
        apply_action(GridState(Lane.LEFT, (14,), lane_changes_used=4), RLC)


def test_terminal_states_absorb():
    crashed = apply_action(GridState(Lane.LEFT, (11,)), ACC)
    with pytest.raises(TerminalStateError):
        apply_action(crashed, DRV)
    overtaken = apply_action(GridState(Lane.LEFT, (9,), None, 1), DRV)
    assert overtaken.overtaken
    with pytest.raises(TerminalStateError):
        apply_action(overtaken, DRV)


def test_out_of_range_vehicles_are_dropped():
    state = GridState(Lane.RIGHT, (27,), 1)
    result = apply_action(state, BRK)  # fv -> 28, ov -> -2
    assert result.front_vehicles == ()
    assert result.oncoming is None


def test_is_crash_cell_equality_is_lane_scoped():
    assert is_crash(GridState(Lane.RIGHT, (12,), 10))
    assert not is_crash(GridState(Lane.LEFT, (12,), 10))
    assert is_crash(GridState(Lane.LEFT, (10, 12)))


def test_pass_through_counts_as_crash():
    # Oncoming sweeps 11 -> 8 across the AV's cell while the AV is in the
    # Right lane; sub-stepping one segment at a time hits segment 10.
    result = apply_action(GridState(Lane.RIGHT, (), 11), BRK)
    assert result.crashed
    # Same sweep with the AV in the Left lane passes in the other lane.
    result = apply_action(GridState(Lane.LEFT, (), 11), BRK)
    assert not result.crashed
    assert result.oncoming == 8


def test_pass_through_sub_step_equivalence():
    # The closed form must agree with literal one-segment sub-stepping.
    for ov in range(0, GRID_MAX + 1):
        for action in (DRV, ACC, BRK):
            delta = ACTION_DELTAS[action].ov_delta
            swept = any(p == AV_SEGMENT for p in range(ov - 1, ov + delta - 1, -1))
            closed = ov >= AV_SEGMENT + 1 and ov + delta <= AV_SEGMENT
            assert swept == closed, (ov, action)


def test_danger_zone_examples():
    assert in_danger_zone(GridState(Lane.RIGHT, (), 11))
    assert not in_danger_zone(GridState(Lane.RIGHT, (), 12))
    assert not in_danger_zone(GridState(Lane.LEFT, (), 11))
    assert not in_danger_zone(GridState(Lane.RIGHT, ()))


def test_overtaken_examples():
    assert is_overtaken(GridState(Lane.LEFT, (8, 9)))
    assert not is_overtaken(GridState(Lane.RIGHT, (9,)))
    assert not is_overtaken(GridState(Lane.LEFT, (9, 11)))


def test_overtake_requires_all_front_vehicles_passed():
    # Replaying a two-vehicle overtake: the overtaken flag must not fire
    # while the second vehicle is still ahead.
    state = GridState(Lane.LEFT, (12, 14))
    actions = [RLC, ACC, ACC, ACC, ACC, ACC, LLC]
    trace = replay(state, actions)
    assert [s.overtaken for s in trace[:-1]] == [False] * (len(trace) - 1)
    assert trace[-1].overtaken
    assert trace[-1].front_vehicles == (7, 9)


def test_replay_empty_plan():
    state = GridState(Lane.LEFT, (12,))
    assert replay(state, []) == [state]


def test_replay_stops_at_terminal():
    trace = replay(GridState(Lane.LEFT, (11,)), [ACC, DRV, DRV])
    assert len(trace) == 2
    assert trace[-1].crashed


def test_replay_spec_example_reaches_overtaken():
    trace = replay(GridState(Lane.LEFT, (12,)), [RLC, ACC, ACC, ACC, LLC])
    assert trace[-1].overtaken and not trace[-1].crashed


def test_state_validation():
    with pytest.raises(ValueError):
        GridState(Lane.LEFT, (14, 12))
    with pytest.raises(ValueError):
        GridState(Lane.LEFT, (14, 14))
    with pytest.raises(ValueError):
        GridState(Lane.LEFT, (28,))
    with pytest.raises(ValueError):
        GridState(Lane.LEFT, (), 99)
    with pytest.raises(ValueError):
        GridState(Lane.LEFT, (), None, -1)
    with pytest.raises(ValueError):
        GridState(Lane.LEFT, (), None, 0, True, True)


def _all_states(max_r=2, lcc_values=(0, 3)):
    segs = range(0, GRID_MAX + 1)
    fv_sets = [()]
    fv_sets += [(a,) for a in segs]
    if max_r >= 2:
        fv_sets += list(itertools.combinations(range(0, GRID_MAX + 1, 3), 2))
    for lane in (Lane.LEFT, Lane.RIGHT):
        for fvs in fv_sets:
            for ov in (None, 0, 5, 9, 10, 11, 12, 17, 27):
                for lcc in lcc_values:
                    yield GridState(lane, fvs, ov, lcc)


def test_delta_exactness_over_enumerable_grid():
    # Component-wise successor-minus-predecessor differences must equal the
    # delta table for every enabled action, before range-dropping.
    for state in _all_states():
        if state.terminal:
            continue
        for action in CANONICAL_ORDER:
            if not is_enabled(state, action):
                continue
            delta = ACTION_DELTAS[action]
            succ = apply_action(state, action)
            expected_fvs = tuple(
                f + delta.fv_delta
                for f in state.front_vehicles
                if 0 <= f + delta.fv_delta <= GRID_MAX
            )
            assert succ.front_vehicles == expected_fvs
            if state.oncoming is None:
                assert succ.oncoming is None
            else:
                shifted = state.oncoming + delta.ov_delta
                assert succ.oncoming == (shifted if 0 <= shifted <= GRID_MAX else None)


def test_crash_evaluated_before_overtaken_never_both():
    for state in _all_states():
        if state.terminal:
            continue
        for action in CANONICAL_ORDER:
            if not is_enabled(state, action):
                continue
            succ = apply_action(state, action)
            assert not (succ.crashed and succ.overtaken)


def test_monotone_oncoming_approach():
    for state in _all_states(max_r=0):
        if state.terminal or state.oncoming is None:
            continue
        for action in CANONICAL_ORDER:
            if not is_enabled(state, action):
                continue
            succ = apply_action(state, action)
            if succ.oncoming is not None:
                assert succ.oncoming <= state.oncoming - 2


def test_front_vehicle_ordering_preserved():
    for state in _all_states():
        if state.terminal:
            continue
        for action in CANONICAL_ORDER:
            if not is_enabled(state, action):
                continue
            fvs = apply_action(state, action).front_vehicles
            assert all(a < b for a, b in zip(fvs, fvs[1:]))


def test_apply_action_is_pure():
    state = GridState(Lane.LEFT, (14, 16), 24)
    results = {apply_action(state, ACC) for _ in range(5)}
    assert len(results) == 1
    assert state.front_vehicles == (14, 16)


@given(
    lane=st.sampled_from([Lane.LEFT, Lane.RIGHT]),
    fvs=st.lists(st.integers(0, GRID_MAX), max_size=3, unique=True).map(
        lambda xs: tuple(sorted(xs))
    ),
    ov=st.one_of(st.none(), st.integers(0, GRID_MAX)),
    lcc=st.integers(0, 4),
)
def test_fast_key_successors_match_apply_action(lane, fvs, ov, lcc):
    state = GridState(lane, fvs, ov, lcc)
    key = state_key(state)
    for action in CANONICAL_ORDER:
        step = successor_key(key, action)
        if not is_enabled(state, action):
            assert step is None
            continue
        succ_key, crashed, overtaken = step
        succ = apply_action(state, action)
        assert key_state(succ_key, crashed, overtaken) == succ


def test_text_form_round_trip():
    state = GridState(Lane.LEFT, (14, 16), 24)
    line = format_state(state)
    assert line == "lane=L; fv=14,16; ov=24; lcc=0"
    assert parse_state(line) == state


def test_text_form_absent_fields():
    state = GridState(Lane.RIGHT, (), None, 2)
    line = format_state(state)
    assert line == "lane=R; fv=-; ov=-; lcc=2"
    assert parse_state(line) == state


@pytest.mark.parametrize(
    "line",
    ["lane=X; fv=-; ov=-; lcc=0", "lane=L; fv=1", "fv=1; ov=-; lcc=0", "lane=L; fv=a; ov=-; lcc=0"],
)
def test_text_form_rejects_malformed(line):
    with pytest.raises(ValueError):
        parse_state(line)
