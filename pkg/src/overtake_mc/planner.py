"""Reachability search over the grid model.

``plan`` runs a depth-first search in the fixed canonical action order and
returns the first action sequence that reaches the active mode's goal, the
same way a model checker surfaces the first counterexample to "the goal is
never reached".  ``oracle_plan_exists`` answers the same reachability
question by exhaustive breadth-first enumeration and exists so tests can
cross-check the search.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

from .grid import (
    AV_SEGMENT,
    CANONICAL_ORDER,
    LANE_LEFT,
    LANE_RIGHT,
    MAX_LANE_CHANGES,
    Action,
    GridState,
    Lane,
    StateKey,
    is_crash,
    state_key,
    successor_key,
)


class PlannerMode(Enum):
    FINAL = "final"
    PREPARATIONS_A = "prepA"
    PREPARATIONS_B = "prepB"


# Danger-zone pruning is active in FINAL and PREPARATIONS_B; PREPARATIONS_A
# lifts it so the AV can retreat to the left lane in an emergency.
_ZONE_MODES = frozenset({PlannerMode.FINAL, PlannerMode.PREPARATIONS_B})

DEFAULT_GAP_TARGET = 2


@dataclass(frozen=True)
class SearchLimits:
    depth_bound: int = 64
    max_states: int = 1_000_000
    max_lane_changes: int = MAX_LANE_CHANGES
    gap_target: int = DEFAULT_GAP_TARGET

    def __post_init__(self) -> None:
        if self.depth_bound < 1:
            raise ValueError("depth_bound must be >= 1")
        if self.max_states < 1:
            raise ValueError("max_states must be >= 1")


@dataclass(frozen=True)
class Plan:
    actions: tuple[Action, ...]
    mode: PlannerMode
    states_expanded: int
    search_time: float


@dataclass(frozen=True)
class NoPath:
    reason: str  # exhausted | depth_bound | state_bound | both_failed
    mode: PlannerMode | None
    states_expanded: int
    search_time: float
    attempts: tuple["NoPath", ...] = field(default=())


def _zone_blocks(mode: PlannerMode, succ: StateKey) -> bool:
    """Danger-zone pruning: no successor may sit in the Right lane within
    one cell of the oncoming vehicle."""
    if mode not in _ZONE_MODES:
        return False
    post_lane, _, post_ov, _ = succ
    return post_lane == LANE_RIGHT and post_ov is not None and abs(post_ov - AV_SEGMENT) <= 1


def _landing_blocked(succ: StateKey) -> bool:
    # A left lane change needs its landing pocket clear: no front vehicle in
    # the AV's cell or the one directly ahead of it.
    _, fvs, _, _ = succ
    return AV_SEGMENT in fvs or AV_SEGMENT + 1 in fvs


def _is_goal(mode: PlannerMode, key: StateKey, overtaken: bool, gap_target: int) -> bool:
    lane, fvs, _, _ = key
    if mode is PlannerMode.FINAL:
        return overtaken
    if lane != LANE_LEFT:
        return False
    if mode is PlannerMode.PREPARATIONS_A:
        return all(not (AV_SEGMENT - 1 <= f <= AV_SEGMENT + 1) for f in fvs)
    # PREPARATIONS_B: some front vehicle ahead within the gap target.
    return any(AV_SEGMENT < f <= AV_SEGMENT + gap_target for f in fvs)


def _expand(
    key: StateKey, mode: PlannerMode, limits: SearchLimits
) -> list[tuple[Action, StateKey, bool]]:
    """Successors of ``key`` in canonical order after all pruning rules.

    Each entry is (action, successor, goal_reached).  Crashed successors are
    abandoned; overtaken successors are terminal and only appear when they
    satisfy the goal.  In the zone-enforcing modes, drive and brake are
    barred while the AV holds the Right lane: front vehicles do not move
    relative to the AV under them and the oncoming vehicle can never legally
    pass, so they only prolong oncoming-lane exposure (the preparations
    fallback keeps them for the brake-and-retreat escape).
    """
    out = []
    pre_lane = key[0]
    dawdle_barred = mode in _ZONE_MODES and pre_lane == LANE_RIGHT
    for action in CANONICAL_ORDER:
        if dawdle_barred and action in (Action.DRIVE, Action.BRAKE):
            continue
        step = successor_key(key, action, limits.max_lane_changes)
        if step is None:
            continue
        succ, crashed, overtaken = step
        if crashed:
            continue
        if _zone_blocks(mode, succ):
            continue
        if action is Action.LEFT_LANE_CHANGE and _landing_blocked(succ):
            continue
        if _is_goal(mode, succ, overtaken, limits.gap_target):
            out.append((action, succ, True))
            continue
        if overtaken:
            continue  # terminal, not this mode's goal
        out.append((action, succ, False))
    return out


def _check_plannable(snapshot: GridState) -> None:
    if snapshot.terminal or is_crash(snapshot):
        raise ValueError(f"snapshot is terminal: {snapshot}")


def plan(
    snapshot: GridState, mode: PlannerMode, limits: SearchLimits | None = None
) -> Plan | NoPath:
    """Depth-first search for the first action sequence reaching the mode's goal.

    Children are expanded in the canonical order; successors that crash,
    violate the mode's danger-zone rule, revisit a known state or exceed the
    depth bound are pruned.  A state is revisited only when reached at a
    strictly shallower depth, which keeps the bounded search equivalent to
    breadth-first reachability.
    """
    _check_plannable(snapshot)
    limits = limits or SearchLimits()
    start = time.perf_counter()
    root = state_key(snapshot)

    if mode is not PlannerMode.FINAL and _is_goal(mode, root, False, limits.gap_target):
        return Plan((), mode, 0, time.perf_counter() - start)

    visited: dict[StateKey, int] = {root: 0}
    expanded = 1
    depth_cut = False
    path: list[Action] = []
    stack: list[tuple[StateKey, int, object]] = [(root, 0, iter(_expand(root, mode, limits)))]

    while stack:
        key, depth, children = stack[-1]
        pushed = False
        for action, succ, goal in children:  # type: ignore[union-attr]
            if goal:
                path.append(action)
                return Plan(tuple(path), mode, expanded, time.perf_counter() - start)
            if depth + 1 > limits.depth_bound:
                depth_cut = True
                continue
            seen = visited.get(succ)
            if seen is not None and seen <= depth + 1:
                continue
            visited[succ] = depth + 1
            expanded += 1
            if expanded > limits.max_states:
                return NoPath("state_bound", mode, expanded, time.perf_counter() - start)
            stack.append((succ, depth + 1, iter(_expand(succ, mode, limits))))
            path.append(action)
            pushed = True
            break
        if not pushed:
            stack.pop()
            if path:
                path.pop()

    reason = "depth_bound" if depth_cut else "exhausted"
    return NoPath(reason, mode, expanded, time.perf_counter() - start)


def oracle_plan_exists(
    snapshot: GridState,
    mode: PlannerMode,
    depth_bound: int = 64,
    *,
    max_lane_changes: int = MAX_LANE_CHANGES,
    gap_target: int = DEFAULT_GAP_TARGET,
) -> bool:
    """Exhaustive breadth-first reachability of the mode's goal.

    Applies the same pruning rules as :func:`plan` but no ordering
    heuristics; used as an independent test oracle.
    """
    _check_plannable(snapshot)
    limits = SearchLimits(
        depth_bound=depth_bound, max_lane_changes=max_lane_changes, gap_target=gap_target
    )
    root = state_key(snapshot)
    if mode is not PlannerMode.FINAL and _is_goal(mode, root, False, gap_target):
        return True
    visited = {root}
    frontier = deque([(root, 0)])
    while frontier:
        key, depth = frontier.popleft()
        if depth >= depth_bound:
            continue
        for _, succ, goal in _expand(key, mode, limits):
            if goal:
                return True
            if succ in visited:
                continue
            visited.add(succ)
            frontier.append((succ, depth + 1))
    return False


def select_mode(snapshot: GridState, final_failed: bool) -> PlannerMode:
    """Pick the preparations goal from the AV's lane after a FINAL no-path."""
    if not final_failed:
        raise ValueError("select_mode is only defined after a failed FINAL search")
    if snapshot.av_lane is Lane.RIGHT:
        return PlannerMode.PREPARATIONS_A
    return PlannerMode.PREPARATIONS_B


def plan_with_fallback(snapshot: GridState, limits: SearchLimits | None = None) -> Plan | NoPath:
    """FINAL-mode search with the preparations model as fallback."""
    limits = limits or SearchLimits()
    first = plan(snapshot, PlannerMode.FINAL, limits)
    if isinstance(first, Plan):
        return first
    fallback_mode = select_mode(snapshot, final_failed=True)
    second = plan(snapshot, fallback_mode, limits)
    if isinstance(second, Plan):
        return second
    return NoPath(
        "both_failed",
        None,
        first.states_expanded + second.states_expanded,
        first.search_time + second.search_time,
        attempts=(first, second),
    )


def validate_plan(
    snapshot: GridState,
    actions: tuple[Action, ...] | list[Action],
    mode: PlannerMode,
    limits: SearchLimits | None = None,
    *,
    require_goal: bool = True,
) -> bool:
    """Check a plan still replays safely from ``snapshot``.

    Walks the plan through the search dynamics (crash, danger-zone and
    landing pruning included); with ``require_goal`` the last state must
    satisfy the mode's goal.  Used before executing or resuming a plan.
    """
    if snapshot.terminal or is_crash(snapshot):
        return False
    limits = limits or SearchLimits()
    key = state_key(snapshot)
    if not actions:
        return not require_goal or _is_goal(mode, key, False, limits.gap_target)
    for i, action in enumerate(actions):
        allowed = _expand(key, mode, limits)
        match = next(((succ, goal) for a, succ, goal in allowed if a is action), None)
        if match is None:
            return False
        key, goal = match
        if goal:
            return i == len(actions) - 1 or not require_goal
    return not require_goal
