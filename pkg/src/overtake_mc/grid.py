"""Discrete AV-centred world model for two-lane overtaking.

The ego vehicle (AV) is pinned to segment 10 of a 28-segment grid; all
motion is expressed as relative shifts of the other vehicles.  Left is the
AV's travel lane, Right is the oncoming lane.  One segment is 21 m of road,
one action is one time-step.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

GRID_MAX = 27
AV_SEGMENT = 10
MAX_LANE_CHANGES = 4
SEGMENT_LENGTH_M = 21.0


class Lane(Enum):
    LEFT = "L"
    RIGHT = "R"


class Action(Enum):
    LEFT_LANE_CHANGE = "left_lane_change"
    ACCELERATE = "accelerate"
    RIGHT_LANE_CHANGE = "right_lane_change"
    DRIVE = "drive"
    BRAKE = "brake"


# Exploration order used by the planner and the emitted model text.
CANONICAL_ORDER = (
    Action.LEFT_LANE_CHANGE,
    Action.ACCELERATE,
    Action.RIGHT_LANE_CHANGE,
    Action.DRIVE,
    Action.BRAKE,
)


class LaneEffect(Enum):
    NONE = "none"
    TO_LEFT = "to_left"
    TO_RIGHT = "to_right"


@dataclass(frozen=True)
class ActionDelta:
    """Per-action relative shifts applied to the other vehicles."""

    fv_delta: int
    ov_delta: int
    lane_effect: LaneEffect


ACTION_DELTAS: dict[Action, ActionDelta] = {
    Action.DRIVE: ActionDelta(0, -2, LaneEffect.NONE),
    Action.ACCELERATE: ActionDelta(-1, -3, LaneEffect.NONE),
    Action.LEFT_LANE_CHANGE: ActionDelta(0, -2, LaneEffect.TO_LEFT),
    Action.RIGHT_LANE_CHANGE: ActionDelta(0, -2, LaneEffect.TO_RIGHT),
    Action.BRAKE: ActionDelta(1, -3, LaneEffect.NONE),
}


class ActionDisabledError(Exception):
    """Raised when an action's enabling condition does not hold."""


class TerminalStateError(Exception):
    """Raised when an action is applied to a crashed or overtaken state."""


@dataclass(frozen=True)
class GridState:
    """Snapshot of the discretised world as the planner sees it.

    ``front_vehicles`` are the same-direction vehicles in the Left lane,
    strictly ascending; ``oncoming`` is the nearest opposing vehicle in the
    Right lane, if any.
    """

    av_lane: Lane
    front_vehicles: tuple[int, ...] = ()
    oncoming: int | None = None
    lane_changes_used: int = 0
    crashed: bool = False
    overtaken: bool = False

    def __post_init__(self) -> None:
        fvs = tuple(self.front_vehicles)
        object.__setattr__(self, "front_vehicles", fvs)
        if any(not (0 <= f <= GRID_MAX) for f in fvs):
            raise ValueError(f"front vehicle segment out of range: {fvs}")
        if any(a >= b for a, b in zip(fvs, fvs[1:])):
            raise ValueError(f"front vehicles must be strictly ascending: {fvs}")
        if self.oncoming is not None and not (0 <= self.oncoming <= GRID_MAX):
            raise ValueError(f"oncoming segment out of range: {self.oncoming}")
        if self.lane_changes_used < 0:
            raise ValueError("lane_changes_used must be non-negative")
        if self.crashed and self.overtaken:
            raise ValueError("a state cannot be both crashed and overtaken")

    @property
    def terminal(self) -> bool:
        return self.crashed or self.overtaken


def is_enabled(state: GridState, action: Action, max_lane_changes: int = MAX_LANE_CHANGES) -> bool:
    """Whether the action's enabling condition holds in a non-terminal state."""
    if action is Action.LEFT_LANE_CHANGE:
        return state.av_lane is Lane.RIGHT and state.lane_changes_used < max_lane_changes
    if action is Action.RIGHT_LANE_CHANGE:
        return state.av_lane is Lane.LEFT and state.lane_changes_used < max_lane_changes
    return True


def apply_action(
    state: GridState, action: Action, max_lane_changes: int = MAX_LANE_CHANGES
) -> GridState:
    """Apply one action and return the successor state.

    Every front vehicle shifts by the action's fv delta, the oncoming
    vehicle by its ov delta; vehicles leaving [0, GRID_MAX] are dropped.
    The crash predicate (cell equality plus the oncoming pass-through rule)
    is evaluated before the overtake predicate.
    """
    if state.terminal:
        raise TerminalStateError(f"no actions apply to a terminal state: {state}")
    if not is_enabled(state, action, max_lane_changes):
        raise ActionDisabledError(f"{action.value} is disabled in {state}")

    delta = ACTION_DELTAS[action]
    if delta.lane_effect is LaneEffect.TO_LEFT:
        lane = Lane.LEFT
    elif delta.lane_effect is LaneEffect.TO_RIGHT:
        lane = Lane.RIGHT
    else:
        lane = state.av_lane
    lcc = state.lane_changes_used + (1 if delta.lane_effect is not LaneEffect.NONE else 0)

    shifted_fvs = tuple(f + delta.fv_delta for f in state.front_vehicles)
    ov_raw = None if state.oncoming is None else state.oncoming + delta.ov_delta

    crashed = False
    if lane is Lane.LEFT and any(f == AV_SEGMENT for f in shifted_fvs):
        crashed = True
    # Pass-through: with |ov delta| > 1 the oncoming vehicle can sweep across
    # the AV's cell in one step; sub-stepping one segment at a time reduces to
    # "started at >= 11 and ended at <= 10" while the AV holds the Right lane.
    if (
        lane is Lane.RIGHT
        and state.oncoming is not None
        and state.oncoming >= AV_SEGMENT + 1
        and ov_raw <= AV_SEGMENT
    ):
        crashed = True

    kept_fvs = tuple(f for f in shifted_fvs if 0 <= f <= GRID_MAX)
    ov = ov_raw if ov_raw is not None and 0 <= ov_raw <= GRID_MAX else None

    overtaken = False
    if not crashed and lane is Lane.LEFT and all(f < AV_SEGMENT for f in kept_fvs):
        overtaken = True

    return GridState(lane, kept_fvs, ov, lcc, crashed, overtaken)


def is_crash(state: GridState) -> bool:
    """True when a vehicle shares the AV's cell in the AV's lane.

    A state produced by :func:`apply_action` also reports pass-through
    crashes via its ``crashed`` flag.
    """
    if state.crashed:
        return True
    if state.av_lane is Lane.LEFT and AV_SEGMENT in state.front_vehicles:
        return True
    return state.av_lane is Lane.RIGHT and state.oncoming == AV_SEGMENT


def in_danger_zone(state: GridState) -> bool:
    """True while the AV sits in the Right lane within one cell of the oncoming vehicle."""
    return (
        state.av_lane is Lane.RIGHT
        and state.oncoming is not None
        and abs(state.oncoming - AV_SEGMENT) <= 1
    )


def is_overtaken(state: GridState) -> bool:
    """True when the AV is back in the Left lane with every tracked front vehicle behind it."""
    return state.av_lane is Lane.LEFT and all(f < AV_SEGMENT for f in state.front_vehicles)


def replay(
    initial: GridState,
    plan: list[Action] | tuple[Action, ...],
    max_lane_changes: int = MAX_LANE_CHANGES,
) -> list[GridState]:
    """Fold a plan over :func:`apply_action`, stopping at the first terminal state.

    Returns the full state trace including the initial state.  Raises
    ``ActionDisabledError`` if a queued action is not enabled when reached.
    """
    trace = [initial]
    for action in plan:
        if trace[-1].terminal:
            break
        trace.append(apply_action(trace[-1], action, max_lane_changes))
    return trace


# --- fast tuple representation -------------------------------------------
#
# Search needs to expand tens of thousands of states; plain tuples keep that
# cheap.  Key layout: (lane_is_right, front_vehicles, oncoming_or_None, lcc).

LANE_LEFT = 0
LANE_RIGHT = 1

_DELTA_ROWS = {a: (d.fv_delta, d.ov_delta, d.lane_effect) for a, d in ACTION_DELTAS.items()}

StateKey = tuple[int, tuple[int, ...], int | None, int]


def state_key(state: GridState) -> StateKey:
    lane = LANE_RIGHT if state.av_lane is Lane.RIGHT else LANE_LEFT
    return (lane, state.front_vehicles, state.oncoming, state.lane_changes_used)


def key_state(key: StateKey, crashed: bool = False, overtaken: bool = False) -> GridState:
    lane, fvs, ov, lcc = key
    return GridState(
        Lane.RIGHT if lane == LANE_RIGHT else Lane.LEFT, fvs, ov, lcc, crashed, overtaken
    )


def successor_key(
    key: StateKey, action: Action, max_lane_changes: int = MAX_LANE_CHANGES
) -> tuple[StateKey, bool, bool] | None:
    """Tuple-level twin of :func:`apply_action`.

    Returns (successor_key, crashed, overtaken), or None when the action is
    disabled.  Semantics must match apply_action exactly; a property test
    enforces the equivalence.
    """
    lane, fvs, ov, lcc = key
    fv_delta, ov_delta, lane_effect = _DELTA_ROWS[action]

    if lane_effect is LaneEffect.TO_LEFT:
        if lane != LANE_RIGHT or lcc >= max_lane_changes:
            return None
        new_lane = LANE_LEFT
        new_lcc = lcc + 1
    elif lane_effect is LaneEffect.TO_RIGHT:
        if lane != LANE_LEFT or lcc >= max_lane_changes:
            return None
        new_lane = LANE_RIGHT
        new_lcc = lcc + 1
    else:
        new_lane = lane
        new_lcc = lcc

    shifted = tuple(f + fv_delta for f in fvs)
    ov_raw = None if ov is None else ov + ov_delta

    crashed = new_lane == LANE_LEFT and AV_SEGMENT in shifted
    if (
        not crashed
        and new_lane == LANE_RIGHT
        and ov is not None
        and ov >= AV_SEGMENT + 1
        and ov_raw <= AV_SEGMENT
    ):
        crashed = True

    kept = tuple(f for f in shifted if 0 <= f <= GRID_MAX)
    new_ov = ov_raw if ov_raw is not None and 0 <= ov_raw <= GRID_MAX else None

    overtaken = (
        not crashed and new_lane == LANE_LEFT and all(f < AV_SEGMENT for f in kept)
    )
    return (new_lane, kept, new_ov, new_lcc), crashed, overtaken


# --- text form -------------------------------------------------------------

def format_state(state: GridState) -> str:
    """Serialise to the line form ``lane=L; fv=14,16; ov=24; lcc=0``."""
    fv = ",".join(str(f) for f in state.front_vehicles) if state.front_vehicles else "-"
    ov = str(state.oncoming) if state.oncoming is not None else "-"
    return f"lane={state.av_lane.value}; fv={fv}; ov={ov}; lcc={state.lane_changes_used}"


def parse_state(line: str) -> GridState:
    """Parse the line form produced by :func:`format_state`."""
    fields: dict[str, str] = {}
    for part in line.strip().split(";"):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ValueError(f"malformed field {part!r}")
        name, value = part.split("=", 1)
        fields[name.strip()] = value.strip()
    missing = {"lane", "fv", "ov", "lcc"} - fields.keys()
    if missing:
        raise ValueError(f"missing fields: {sorted(missing)}")
    try:
        lane = Lane(fields["lane"])
    except ValueError:
        raise ValueError(f"lane must be L or R, got {fields['lane']!r}") from None
    fv_text = fields["fv"]
    fvs = () if fv_text == "-" else tuple(int(x) for x in fv_text.split(","))
    ov = None if fields["ov"] == "-" else int(fields["ov"])
    return GridState(lane, fvs, ov, int(fields["lcc"]))
