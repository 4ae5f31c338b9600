"""Two-lane overtaking planner: grid model, reachability search, simulator and model-text bridge."""

from .grid import (
    ACTION_DELTAS,
    AV_SEGMENT,
    CANONICAL_ORDER,
    GRID_MAX,
    MAX_LANE_CHANGES,
    Action,
    ActionDelta,
    ActionDisabledError,
    GridState,
    Lane,
    LaneEffect,
    TerminalStateError,
    apply_action,
    format_state,
    in_danger_zone,
    is_crash,
    is_overtaken,
    parse_state,
    replay,
)
from .planner import (
    NoPath,
    Plan,
    PlannerMode,
    SearchLimits,
    oracle_plan_exists,
    plan,
    plan_with_fallback,
    select_mode,
)

__all__ = [
    "ACTION_DELTAS",
    "AV_SEGMENT",
    "CANONICAL_ORDER",
    "GRID_MAX",
    "MAX_LANE_CHANGES",
    "Action",
    "ActionDelta",
    "ActionDisabledError",
    "GridState",
    "Lane",
    "LaneEffect",
    "TerminalStateError",
    "apply_action",
    "format_state",
    "in_danger_zone",
    "is_crash",
    "is_overtaken",
    "parse_state",
    "replay",
    "NoPath",
    "Plan",
    "PlannerMode",
    "SearchLimits",
    "oracle_plan_exists",
    "plan",
    "plan_with_fallback",
    "select_mode",
]

__version__ = "0.1.0"
