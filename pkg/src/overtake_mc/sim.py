"""Continuous two-lane world: kinematics, plan execution, traffic and collisions.

The AV executes planner action lists as fixed 3 s action windows (brake
spans 6 s) while all other vehicles hold 7 m/s.  Traffic is recycled: a
vehicle falling five segments behind the AV despawns and a replacement
spawns ahead per the configured gap distributions, keeping the vehicle
count constant.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .grid import AV_SEGMENT, SEGMENT_LENGTH_M, Action, GridState, Lane, is_crash
from .planner import NoPath, Plan, PlannerMode, SearchLimits, plan_with_fallback, validate_plan
from .sensing import (
    ContinuousVehicle,
    GridSnapshot,
    SensorConfig,
    SnapshotAudit,
    audit_snapshot,
    scan_360,
    sense,
)

log = logging.getLogger(__name__)

DEFAULT_SPEED = 7.0          # m/s, 25.2 km/h
ACCELERATE_SPEED = 14.0      # m/s, 50.4 km/h
BRAKE_SPEED = 3.5            # m/s, 12.6 km/h
MIN_SPEED = 7.0 / 3.6        # hard floor, 7 km/h
MAX_ACCEL = 2.5              # m/s^2 bound on AV speed relaxation
ACTION_WINDOW_S = 3.0
BRAKE_WINDOW_S = 6.0
LANE_CHANGE_S = 3.0
LANE_SEPARATION = 3.5        # m between lane centrelines
VEHICLE_WIDTH = 1.8
DEFAULT_TICK_S = 0.02

LANDING_CLEAR_BEHIND = 6.0   # m: left-lane vehicle this close behind blocks a left merge
LANDING_CLEAR_AHEAD = 16.0   # m: ... or this close ahead
LANDING_HOLD_MAX_S = 14.0
ONCOMING_RESERVE = 12.0      # m of oncoming budget kept beyond the estimated need
EMERGENCY_PASS_MIN_OV = 16   # grid cell: accelerate past an alongside vehicle only
                             # when the oncoming vehicle is at least this far out
BRAKE_CLEAR_BEHIND = 34.0    # m: dropping back one segment needs this much room behind


class AvPhase(Enum):
    DRIVE = "drive"
    ACCELERATE = "accelerate"
    BRAKE = "brake"
    LANE_CHANGE_LEFT = "lane_change_left"
    LANE_CHANGE_RIGHT = "lane_change_right"


_PHASE_TARGET = {
    AvPhase.DRIVE: DEFAULT_SPEED,
    AvPhase.ACCELERATE: ACCELERATE_SPEED,
    AvPhase.BRAKE: BRAKE_SPEED,
    AvPhase.LANE_CHANGE_LEFT: DEFAULT_SPEED,
    AvPhase.LANE_CHANGE_RIGHT: DEFAULT_SPEED,
}


class FailureCause(Enum):
    FAKE_GAP = "fake_gap"
    PHANTOM_OBSTACLE = "phantom_obstacle"
    SAME_SEGMENT_MERGE = "same_segment_merge"
    PLANNER_NO_PATH = "planner_no_path"
    GROUND_TRUTH_COLLISION = "ground_truth_collision"
    MANUAL_STOP = "manual_stop"


@dataclass(frozen=True)
class RunMetrics:
    sim_time: float
    overtaken_count: int
    distance_km: float
    failure_cause: FailureCause


@dataclass(frozen=True)
class SpawnConfig:
    left_gap_choices: tuple[int, ...] = (1, 2, 3, 4)
    max_consecutive: int = 3
    right_gap_segments: tuple[int, ...] = (8, 12, 16, 20)
    right_gap_probs: tuple[float, ...] = (0.125, 0.25, 0.25, 0.375)
    despawn_behind: int = 5

    def __post_init__(self) -> None:
        if len(self.right_gap_segments) != len(self.right_gap_probs):
            raise ValueError("right gap segments and probabilities must pair up")
        if abs(sum(self.right_gap_probs) - 1.0) > 1e-9:
            raise ValueError("right gap probabilities must sum to 1")


@dataclass
class ContinuousWorld:
    av: ContinuousVehicle
    others: list[ContinuousVehicle]
    rng: np.random.Generator
    av_phase: AvPhase = AvPhase.DRIVE
    clock: float = 0.0
    lane_change_progress: float | None = None
    lane_change_to: Lane | None = None
    _lane_change_from: Lane | None = None
    next_vid: int = field(default=1)


def lane_centre(lane: Lane) -> float:
    return 0.0 if lane is Lane.LEFT else LANE_SEPARATION


def av_lateral(world: ContinuousWorld) -> float:
    """AV lateral position; lane centres sit 3.5 m apart, Left at 0."""
    if world.lane_change_progress is None:
        return lane_centre(world.av.lane)
    p = min(world.lane_change_progress, 1.0)
    start = lane_centre(world._lane_change_from)
    return start + (lane_centre(world.lane_change_to) - start) * p


def start_lane_change(world: ContinuousWorld, to_lane: Lane) -> None:
    if to_lane is world.av.lane:
        raise ValueError("lane change must target the other lane")
    world._lane_change_from = world.av.lane
    world.lane_change_to = to_lane
    world.lane_change_progress = 0.0
    world.av_phase = (
        AvPhase.LANE_CHANGE_LEFT if to_lane is Lane.LEFT else AvPhase.LANE_CHANGE_RIGHT
    )


def step(world: ContinuousWorld, dt: float) -> None:
    """Advance every vehicle by one fixed time step.

    Non-AV vehicles hold 7 m/s along their heading.  The AV's speed relaxes
    toward its phase target at most 2.5 m/s^2 and a lane change
    interpolates lateral position over 3 s.
    """
    if not 0.0 < dt <= 0.1:
        raise ValueError("dt must be in (0, 0.1]")
    for v in world.others:
        v.s += (v.speed if v.lane is Lane.LEFT else -v.speed) * dt

    target = _PHASE_TARGET[world.av_phase]
    speed = world.av.speed
    if speed < target:
        speed = min(target, speed + MAX_ACCEL * dt)
    elif speed > target:
        speed = max(target, speed - MAX_ACCEL * dt)
    world.av.speed = max(speed, MIN_SPEED)
    world.av.s += world.av.speed * dt

    if world.lane_change_progress is not None:
        world.lane_change_progress += dt / LANE_CHANGE_S
        if world.lane_change_progress >= 1.0:
            world.av.lane = world.lane_change_to
            world.lane_change_progress = None
            world.lane_change_to = None
            world._lane_change_from = None
    world.clock += dt


@dataclass(frozen=True)
class CollisionRecord:
    vid: int
    delta_s: float
    lane: Lane


def detect_collision(world: ContinuousWorld) -> CollisionRecord | None:
    """Bounding-box contact between the AV and any other vehicle.

    Boxes overlap when both the half-length sums (longitudinal) and the
    half-width sums (lateral, with traffic lane-centred) are exceeded, so a
    mid-change AV can hit either lane's occupants.
    """
    av = world.av
    y = av_lateral(world)
    for v in world.others:
        if abs(v.s - av.s) >= (av.length + v.length) / 2:
            continue
        if abs(y - lane_centre(v.lane)) < VEHICLE_WIDTH:
            return CollisionRecord(v.vid, v.s - av.s, v.lane)
    return None


# --- traffic recycling ------------------------------------------------------

def draw_left_gap(cfg: SpawnConfig, rng: np.random.Generator) -> int:
    return int(cfg.left_gap_choices[rng.integers(0, len(cfg.left_gap_choices))])


def draw_right_gap(cfg: SpawnConfig, rng: np.random.Generator) -> int:
    u = rng.random()
    acc = 0.0
    for seg, p in zip(cfg.right_gap_segments, cfg.right_gap_probs):
        acc += p
        if u < acc:
            return seg
    return cfg.right_gap_segments[-1]


def _left_run_length(cells: set[int], new_cell: int) -> int:
    run = 1
    c = new_cell - 1
    while c in cells:
        run += 1
        c -= 1
    return run


# New vehicles land mid-cell (phase drawn inside the target segment) so
# floor-based discretisation is stable against tick-level jitter and two
# vehicles never truly share a segment.
_PHASE_LO, _PHASE_HI = 6.0, 15.0


def _cell_of(s: float) -> int:
    return int(np.floor(s / SEGMENT_LENGTH_M))


def _spawn_left(world: ContinuousWorld, cfg: SpawnConfig, rng: np.random.Generator) -> float:
    lefts = [v for v in world.others if v.lane is Lane.LEFT]
    leader_cell = max((_cell_of(v.s) for v in lefts), default=_cell_of(world.av.s))
    cells = {_cell_of(v.s) for v in lefts}
    while True:
        cell = leader_cell + draw_left_gap(cfg, rng)
        if _left_run_length(cells, cell) <= cfg.max_consecutive:
            return cell * SEGMENT_LENGTH_M + float(rng.uniform(_PHASE_LO, _PHASE_HI))


def _spawn_right(world: ContinuousWorld, cfg: SpawnConfig, rng: np.random.Generator) -> float:
    rights = [v for v in world.others if v.lane is Lane.RIGHT]
    farthest_cell = max((_cell_of(v.s) for v in rights), default=_cell_of(world.av.s))
    cell = farthest_cell + draw_right_gap(cfg, rng)
    return cell * SEGMENT_LENGTH_M + float(rng.uniform(_PHASE_LO, _PHASE_HI))


def spawn_despawn(world: ContinuousWorld, cfg: SpawnConfig) -> list[dict]:
    """Recycle vehicles fallen more than ``despawn_behind`` segments behind the AV.

    Each despawned vehicle is replaced in its own lane, so the total count
    is conserved.  Returns event records for the run log.
    """
    cutoff = world.av.s - cfg.despawn_behind * SEGMENT_LENGTH_M
    removed = sorted(
        (v for v in world.others if v.s < cutoff), key=lambda v: (v.lane.value, v.s, v.vid)
    )
    events = []
    for old in removed:
        world.others.remove(old)
        s = (
            _spawn_left(world, cfg, world.rng)
            if old.lane is Lane.LEFT
            else _spawn_right(world, cfg, world.rng)
        )
        new = ContinuousVehicle(world.next_vid, old.lane, s, DEFAULT_SPEED)
        world.next_vid += 1
        world.others.append(new)
        events.append(
            {
                "event": "respawn",
                "lane": old.lane.value,
                "despawned": old.vid,
                "spawned": new.vid,
                "s": s,
            }
        )
    return events


def build_world(
    rng: np.random.Generator,
    spawn_cfg: SpawnConfig,
    n_left: int = 6,
    n_right: int = 4,
    first_left_gap: int = 2,
    first_right_gap: int = 12,
) -> ContinuousWorld:
    """Seeded initial traffic: AV at the origin with streams in both lanes."""
    av = ContinuousVehicle(0, Lane.LEFT, 0.0, DEFAULT_SPEED)
    world = ContinuousWorld(av=av, others=[], rng=rng)
    s = first_left_gap * SEGMENT_LENGTH_M + float(rng.uniform(_PHASE_LO, _PHASE_HI))
    for _ in range(n_left):
        world.others.append(ContinuousVehicle(world.next_vid, Lane.LEFT, s, DEFAULT_SPEED))
        world.next_vid += 1
        s = _spawn_left(world, spawn_cfg, rng)
    s = first_right_gap * SEGMENT_LENGTH_M + float(rng.uniform(_PHASE_LO, _PHASE_HI))
    for _ in range(n_right):
        world.others.append(ContinuousVehicle(world.next_vid, Lane.RIGHT, s, DEFAULT_SPEED))
        world.next_vid += 1
        s = _spawn_right(world, spawn_cfg, rng)
    return world


# --- plan execution ---------------------------------------------------------

_WINDOW_PHASE = {
    Action.DRIVE: AvPhase.DRIVE,
    Action.ACCELERATE: AvPhase.ACCELERATE,
    Action.BRAKE: AvPhase.BRAKE,
}

# Fraction of a lane change during which the AV's body can still touch a
# lane-centred vehicle in the lane it is leaving (half-width sums).
_EXPOSED_FRACTION = VEHICLE_WIDTH / LANE_SEPARATION
EXPOSED_LANE_CHANGE_S = LANE_CHANGE_S * _EXPOSED_FRACTION
_BODY_MARGIN = 4.5  # half-length sum of two default vehicles
_WINDOW_CAP_S = 16.0


def flow_gain(world: ContinuousWorld) -> float:
    """AV position in the co-moving frame of same-direction traffic."""
    return world.av.s - DEFAULT_SPEED * world.clock


def _relax(v: float, target: float, dt: float) -> float:
    if v < target:
        v = min(target, v + MAX_ACCEL * dt)
    elif v > target:
        v = max(target, v - MAX_ACCEL * dt)
    return max(v, MIN_SPEED)


def _integrate(
    v: float,
    target: float,
    duration: float | None = None,
    gain_stop: float | None = None,
    dt: float = 0.05,
) -> tuple[float, float, float, float]:
    """Closed-loop speed profile: returns (elapsed, oncoming closure, flow gain, v_end).

    Stops after ``duration`` seconds or once the flow-frame gain passes
    ``gain_stop`` (sign gives the direction), whichever applies.
    """
    t = closure = gain = 0.0
    while t < _WINDOW_CAP_S:
        if duration is not None and t >= duration - 1e-9:
            break
        if gain_stop is not None and (
            (gain_stop > 0 and gain >= gain_stop - 1e-9)
            or (gain_stop < 0 and gain <= gain_stop + 1e-9)
        ):
            break
        v = _relax(v, target, dt)
        closure += (v + DEFAULT_SPEED) * dt
        gain += (v - DEFAULT_SPEED) * dt
        t += dt
    return t, closure, gain, v


@dataclass(frozen=True)
class _SenseBundle:
    left_rels: tuple[float, ...]
    oncoming_gap: float


class PlanExecutor:
    """Consumes a plan one action window at a time.

    Drive and lane-change windows are fixed 3 s; accelerate and brake
    windows end when the AV has gained or lost one full segment (21 m)
    relative to same-direction traffic, using the sensed vehicles as
    reference points so discrete progress matches the grid trace.  At each
    boundary a sensed safety check may hold a blocked left merge or cut the
    plan to an immediate escape when the oncoming budget no longer covers
    the remaining manoeuvre.
    """

    def __init__(self) -> None:
        self.queue: deque[Action] = deque()
        self.mode: PlannerMode | None = None
        self.snapshot: GridSnapshot | None = None
        self.audit: SnapshotAudit | None = None
        self.plan_ids: frozenset[int] = frozenset()
        self.active: Action | None = None
        self.window_end = 0.0
        self.window_marker = 0.0
        self.window_started = 0.0
        self.hold_elapsed = 0.0
        self.escapes = 0
        self._resync_after_window = False

    def load(self, plan: Plan, snapshot: GridSnapshot, audit: SnapshotAudit | None) -> None:
        # An empty plan (a preparations goal already satisfied) degrades to
        # one drive window so the world keeps moving between replans.
        self.queue = deque(plan.actions or (Action.DRIVE,))
        self.mode = plan.mode
        self.snapshot = snapshot
        self.audit = audit
        self.plan_ids = snapshot.source_ids
        self.hold_elapsed = 0.0

    def load_raw(
        self,
        actions: tuple[Action, ...],
        snapshot: GridSnapshot,
        audit: SnapshotAudit | None,
    ) -> None:
        self.queue = deque(actions)
        self.mode = None
        self.snapshot = snapshot
        self.audit = audit
        self.plan_ids = snapshot.source_ids
        self.hold_elapsed = 0.0

    @property
    def at_boundary(self) -> bool:
        return self.active is None

    def has_work(self) -> bool:
        return self.active is not None or bool(self.queue)

    def _sense(self, world: ContinuousWorld, cfg: SensorConfig) -> _SenseBundle:
        from .sensing import scan_360, scan_front_right

        lefts = tuple(d.jittered_s for d in scan_360(world, cfg, world.rng))
        front = scan_front_right(world, cfg, world.rng)
        return _SenseBundle(lefts, front.jittered_s if front is not None else float("inf"))

    def try_start(self, world: ContinuousWorld, sensor_cfg: SensorConfig) -> bool:
        """Start the next window; False while holding or after cutting the queue."""
        if self.active is not None:
            return True
        if not self.queue:
            return False
        bundle = self._sense(world, sensor_cfg)
        if self._oncoming_budget_exceeded(world, bundle):
            if world.av.lane is Lane.RIGHT:
                # Abandon the manoeuvre and escape to the left lane now.
                self.escapes += 1
                self.queue = deque([Action.LEFT_LANE_CHANGE])
            else:
                # Not committed yet: idle in lane until the oncoming passes.
                world.av_phase = AvPhase.DRIVE
                return False
        action = self.queue[0]
        if action is Action.LEFT_LANE_CHANGE and self._must_hold(world, bundle):
            self._steer_hold(world, bundle)
            return False
        if (
            action is Action.BRAKE
            and world.av.lane is Lane.LEFT
            and any(-BRAKE_CLEAR_BEHIND < rel < 0 for rel in bundle.left_rels)
        ):
            # Dropping back a segment would back into a just-passed vehicle
            # the grid no longer tracks; coast instead and replan after.
            self.escapes += 1
            self.queue = deque([Action.DRIVE])
            action = Action.DRIVE
        self.queue.popleft()
        if self.hold_elapsed > 0.0:
            # The hold moved the AV relative to the grid trace; the rest of
            # the plan is stale, so finish this window and replan fresh.
            self._resync_after_window = True
        self.hold_elapsed = 0.0
        self.active = action
        self.window_started = world.clock
        self.window_marker = flow_gain(world)
        if action in (Action.LEFT_LANE_CHANGE, Action.RIGHT_LANE_CHANGE):
            start_lane_change(
                world, Lane.LEFT if action is Action.LEFT_LANE_CHANGE else Lane.RIGHT
            )
            self.window_end = world.clock + LANE_CHANGE_S
        else:
            world.av_phase = _WINDOW_PHASE[action]
            self.window_end = world.clock + (
                BRAKE_WINDOW_S if action is Action.BRAKE else ACTION_WINDOW_S
            )
        return True

    # -- boundary safety checks (all on sensed data) --

    def _landing_blockers(self, bundle: _SenseBundle) -> list[float]:
        return [
            rel
            for rel in bundle.left_rels
            if -LANDING_CLEAR_BEHIND < rel < LANDING_CLEAR_AHEAD
        ]

    def _exposure_need(self, v: float) -> float:
        _, closure, _, _ = _integrate(v, DEFAULT_SPEED, duration=EXPOSED_LANE_CHANGE_S)
        return closure + _BODY_MARGIN

    def _hold_cost(self, rels: list[float], v: float) -> float:
        """Oncoming closure spent clearing the landing pocket before a merge."""
        if not rels:
            return 0.0
        nearest = min(rels, key=abs)
        if nearest > 0:
            need = (LANDING_CLEAR_AHEAD - nearest) / (DEFAULT_SPEED - BRAKE_SPEED)
            _, closure, _, _ = _integrate(v, BRAKE_SPEED, duration=need)
        else:
            gain_needed = nearest + LANDING_CLEAR_BEHIND
            _, closure, _, _ = _integrate(v, ACCELERATE_SPEED, gain_stop=gain_needed + 1e-6)
        return closure

    def _oncoming_budget_exceeded(self, world: ContinuousWorld, bundle: _SenseBundle) -> bool:
        """Whether the sensed oncoming gap no longer covers the path back left."""
        if world.av.lane is Lane.LEFT and (
            not self.queue or self.queue[0] is not Action.RIGHT_LANE_CHANGE
        ):
            return False
        if bundle.oncoming_gap == float("inf"):
            return False
        v = world.av.speed
        closure = 0.0
        gain = 0.0
        for action in self.queue:
            if action is Action.LEFT_LANE_CHANGE:
                predicted = [rel - gain for rel in bundle.left_rels]
                blockers = [
                    r for r in predicted if -LANDING_CLEAR_BEHIND < r < LANDING_CLEAR_AHEAD
                ]
                closure += self._hold_cost(blockers, v) + self._exposure_need(v)
                break
            if action is Action.ACCELERATE:
                _, c, g, v = _integrate(v, ACCELERATE_SPEED, gain_stop=SEGMENT_LENGTH_M)
            elif action is Action.BRAKE:
                _, c, g, v = _integrate(v, BRAKE_SPEED, gain_stop=-SEGMENT_LENGTH_M)
            else:
                _, c, g, v = _integrate(v, DEFAULT_SPEED, duration=ACTION_WINDOW_S)
            closure += c
            gain += g
        else:
            # No merge queued: budget one escape from wherever the queue ends.
            closure += self._exposure_need(v)
        return bundle.oncoming_gap < closure + ONCOMING_RESERVE

    def _must_hold(self, world: ContinuousWorld, bundle: _SenseBundle) -> bool:
        if self.hold_elapsed >= LANDING_HOLD_MAX_S:
            return False
        blockers = self._landing_blockers(bundle)
        if not blockers:
            return False
        # Holding is only worth it while the oncoming gap still covers the
        # merge afterwards; otherwise go now, blocked or not.
        affordable = bundle.oncoming_gap - self._exposure_need(world.av.speed)
        return affordable > 2.0

    def _steer_hold(self, world: ContinuousWorld, bundle: _SenseBundle) -> None:
        # With any blocker ahead, drop back until the whole cluster has
        # pulled clear (monotone: followers drift forward past the AV too);
        # only a purely-behind blocker is cleared by pulling away.
        blockers = self._landing_blockers(bundle)
        ahead = any(rel > 0 for rel in blockers)
        world.av_phase = AvPhase.BRAKE if ahead else AvPhase.ACCELERATE

    def note_hold(self, dt: float) -> None:
        self.hold_elapsed += dt

    def finish_elapsed_window(self, world: ContinuousWorld) -> Action | None:
        """Close the active window once complete; returns the finished action."""
        if self.active is None:
            return None
        action = self.active
        if action is Action.ACCELERATE:
            done = flow_gain(world) - self.window_marker >= SEGMENT_LENGTH_M - 1e-6
        elif action is Action.BRAKE:
            done = flow_gain(world) - self.window_marker <= -SEGMENT_LENGTH_M + 1e-6
        else:
            done = world.clock >= self.window_end - 1e-9
        if world.clock - self.window_started >= _WINDOW_CAP_S:
            done = True
        if not done:
            return None
        if action in (Action.LEFT_LANE_CHANGE, Action.RIGHT_LANE_CHANGE):
            if world.lane_change_progress is not None:
                world.av.lane = world.lane_change_to
                world.lane_change_progress = None
                world.lane_change_to = None
                world._lane_change_from = None
        self.active = None
        if self._resync_after_window:
            self._resync_after_window = False
            self.queue.clear()
        if not self.queue:
            world.av_phase = AvPhase.DRIVE
        return action


@dataclass(frozen=True)
class ExecutionOutcome:
    completed: bool
    collision: CollisionRecord | None
    elapsed: float


def execute_plan(
    world: ContinuousWorld,
    plan: Plan,
    dt: float = DEFAULT_TICK_S,
    sensor_cfg: SensorConfig | None = None,
    on_tick=None,
) -> ExecutionOutcome:
    """Execute a plan's windows in isolation (no replanning or traffic recycling).

    Aborts with the collision record if bounding boxes ever overlap
    mid-execution.  ``on_tick`` observes the world after every step.
    """
    cfg = sensor_cfg or SensorConfig()
    executor = PlanExecutor()
    executor.queue = deque(plan.actions)
    start = world.clock
    while executor.has_work():
        started = executor.try_start(world, cfg)
        if not started and not executor.queue:
            break  # escape cut the whole queue
        step(world, dt)
        if not started:
            executor.note_hold(dt)
        if on_tick is not None:
            on_tick(world)
        hit = detect_collision(world)
        if hit is not None:
            return ExecutionOutcome(False, hit, world.clock - start)
        executor.finish_elapsed_window(world)
    return ExecutionOutcome(True, None, world.clock - start)


# --- replanning -------------------------------------------------------------

@dataclass(frozen=True)
class ReplanOutcome:
    """What a boundary decision did: kept the queue, replanned, or failed."""

    triggered: bool
    trigger: str | None = None
    result: Plan | NoPath | None = None
    snapshot: GridSnapshot | None = None


def maybe_replan(
    world: ContinuousWorld,
    executor: PlanExecutor,
    sensor_cfg: SensorConfig,
    limits: SearchLimits,
) -> ReplanOutcome:
    """Replan exactly when the queue is empty or a new vehicle is sensed.

    Called between action windows only; world time is frozen throughout
    (the function never steps the world).  When a newly sensed vehicle does
    not invalidate the remaining plan, the plan is kept.
    """
    if not executor.at_boundary:
        return ReplanOutcome(False)
    snapshot = sense(world, sensor_cfg, world.rng)
    new_ids = snapshot.source_ids - executor.plan_ids
    if executor.queue:
        if not new_ids:
            return ReplanOutcome(False)
        remaining = tuple(executor.queue)
        mode = executor.mode or PlannerMode.FINAL
        if validate_plan(snapshot.state, remaining, mode, limits, require_goal=False):
            executor.plan_ids = snapshot.source_ids
            return ReplanOutcome(True, "new_vehicle_kept", None, snapshot)
        trigger = "invalidated"
    else:
        trigger = "new_vehicle" if new_ids and executor.snapshot is not None else "queue_empty"

    audit = audit_snapshot(snapshot, world, sensor_cfg)
    grid_conflict = is_crash(snapshot.state) or snapshot.state.terminal
    if grid_conflict or snapshot.own_cell_left:
        # A vehicle is sensed in the AV's own cell, which the grid cannot
        # plan from; steer for the exit instead.  Mid-overtake the AV
        # finishes the pass if the oncoming vehicle is far enough, else it
        # leaves the oncoming lane; in its own lane it drops back behind
        # the conflict when there is room, or pulls out past it.
        ov = snapshot.state.oncoming
        ov_far = ov is None or ov >= EMERGENCY_PASS_MIN_OV
        if world.av.lane is Lane.RIGHT:
            if snapshot.own_cell_left and ov_far:
                escape = (Action.ACCELERATE,)
            else:
                escape = (Action.LEFT_LANE_CHANGE,)
        elif snapshot.own_cell_left:
            rels = [d.jittered_s for d in scan_360(world, sensor_cfg, world.rng)]
            if not any(-BRAKE_CLEAR_BEHIND < rel < 0 for rel in rels):
                escape = (Action.BRAKE,)
            elif ov_far:
                escape = (Action.RIGHT_LANE_CHANGE,)
            else:
                escape = (Action.DRIVE,)
        else:
            escape = (Action.DRIVE,)
        executor.load_raw(escape, snapshot, audit)
        return ReplanOutcome(True, "emergency", None, snapshot)

    result = plan_with_fallback(snapshot.state, limits)
    if isinstance(result, Plan):
        executor.load(result, snapshot, audit)
    return ReplanOutcome(True, trigger, result, snapshot)


def classify_failure(audit: SnapshotAudit | None) -> FailureCause:
    """Attribute a ground-truth collision to the sensing defect that planned it."""
    if audit is None:
        return FailureCause.GROUND_TRUTH_COLLISION
    if audit.merged_segments:
        return FailureCause.SAME_SEGMENT_MERGE
    if audit.missing_segments or audit.oncoming_missing:
        return FailureCause.FAKE_GAP
    if audit.spurious_segments or audit.oncoming_spurious:
        return FailureCause.PHANTOM_OBSTACLE
    return FailureCause.GROUND_TRUTH_COLLISION
