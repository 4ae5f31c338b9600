"""Simulated sensors over the continuous world and grid discretisation.

Three sensors feed the planner: a 360-degree ranged sensor for left-lane
vehicles (with optional line-of-sight occlusion), a long-range front sensor
for the oncoming lane, and a boolean right-side sensor for an obstacle
alongside.  Configurable dropout, phantom and range-jitter noise reproduce
the missed-vehicle, spurious-vehicle and same-cell failure classes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING

import numpy as np

from .grid import AV_SEGMENT, GRID_MAX, SEGMENT_LENGTH_M, GridState, Lane

if TYPE_CHECKING:
    from .sim import ContinuousWorld

log = logging.getLogger(__name__)

DEFAULT_VEHICLE_LENGTH = 4.5
SIDE_SENSOR_MARGIN = 2.0


@dataclass
class ContinuousVehicle:
    """A vehicle in metric space; left-lane vehicles move in +s, right-lane in -s."""

    vid: int
    lane: Lane
    s: float
    speed: float = 7.0
    length: float = DEFAULT_VEHICLE_LENGTH

    def __post_init__(self) -> None:
        if self.length <= 0:
            raise ValueError("length must be positive")


@dataclass(frozen=True)
class SensorConfig:
    range_360: float = 100.0
    range_front_right: float = 357.0
    dropout_prob: float = 0.0
    phantom_prob: float = 0.0
    range_jitter_sigma: float = 0.0
    occlusion: str = "off"  # "off" | "strict"

    def __post_init__(self) -> None:
        if min(self.dropout_prob, self.phantom_prob, self.range_jitter_sigma) < 0:
            raise ValueError("noise parameters must be >= 0")
        if self.occlusion not in ("off", "strict"):
            raise ValueError("occlusion must be 'off' or 'strict'")

    def noise_free(self) -> "SensorConfig":
        return SensorConfig(self.range_360, self.range_front_right, 0.0, 0.0, 0.0, self.occlusion)


class DetectionSource(Enum):
    SENSOR_360 = "sensor_360"
    FRONT_RIGHT = "front_right"
    RIGHT_SIDE = "right_side"
    PHANTOM = "phantom"


@dataclass(frozen=True)
class Detection:
    lane: Lane
    relative_s: float
    jittered_s: float
    provenance: DetectionSource
    source_id: int | None = None


@dataclass(frozen=True)
class GridSnapshot:
    """Discretised sensor picture plus the bookkeeping the simulator needs.

    ``own_cell_left`` flags a same-direction vehicle discretised into the
    AV's own cell; the grid cannot track it as a front vehicle, so the
    simulator treats it as an immediate conflict.
    """

    state: GridState
    merged_segments: tuple[int, ...] = ()
    source_ids: frozenset[int] = frozenset()
    own_cell_left: bool = False


def _jitter(rel: float, cfg: SensorConfig, rng: np.random.Generator) -> float:
    if cfg.range_jitter_sigma > 0:
        return rel + float(rng.normal(0.0, cfg.range_jitter_sigma))
    return rel


def scan_360(world: ContinuousWorld, cfg: SensorConfig, rng: np.random.Generator) -> list[Detection]:
    """Left-lane vehicles within range, after occlusion, dropout, jitter and phantoms."""
    av = world.av
    candidates = sorted(
        (v.s - av.s, v.vid)
        for v in world.others
        if v.lane is Lane.LEFT and abs(v.s - av.s) <= cfg.range_360
    )
    if cfg.occlusion == "strict" and candidates:
        # In straight-lane geometry a vehicle hides everything beyond it on
        # the same side of the AV, so only the nearest per side is visible.
        ahead = [c for c in candidates if c[0] >= 0]
        behind = [c for c in candidates if c[0] < 0]
        candidates = ([behind[-1]] if behind else []) + ([ahead[0]] if ahead else [])

    detections = []
    for rel, vid in candidates:
        if cfg.dropout_prob > 0 and rng.random() < cfg.dropout_prob:
            continue
        detections.append(
            Detection(Lane.LEFT, rel, _jitter(rel, cfg, rng), DetectionSource.SENSOR_360, vid)
        )
    if cfg.phantom_prob > 0 and rng.random() < cfg.phantom_prob:
        ghost = float(rng.uniform(-cfg.range_360, cfg.range_360))
        detections.append(Detection(Lane.LEFT, ghost, ghost, DetectionSource.PHANTOM, None))
    return detections


def scan_front_right(
    world: ContinuousWorld, cfg: SensorConfig, rng: np.random.Generator
) -> Detection | None:
    """Nearest right-lane vehicle ahead within the long-range sensor."""
    av = world.av
    ahead = sorted(
        (v.s - av.s, v.vid)
        for v in world.others
        if v.lane is Lane.RIGHT and 0 < v.s - av.s <= cfg.range_front_right
    )
    if not ahead:
        return None
    rel, vid = ahead[0]
    if cfg.dropout_prob > 0 and rng.random() < cfg.dropout_prob:
        return None
    return Detection(Lane.RIGHT, rel, _jitter(rel, cfg, rng), DetectionSource.FRONT_RIGHT, vid)


def scan_right_side(
    world: ContinuousWorld, cfg: SensorConfig, rng: np.random.Generator | None = None
) -> bool:
    """Whether a right-lane vehicle overlaps the AV's longitudinal extent (+/- 2 m)."""
    av = world.av
    return any(
        v.lane is Lane.RIGHT
        and abs(v.s - av.s) <= (av.length + v.length) / 2 + SIDE_SENSOR_MARGIN
        for v in world.others
    )


def segment_of(relative_s: float) -> int:
    """Grid cell of a relative position; the AV's own cell is 10."""
    return AV_SEGMENT + math.floor(relative_s / SEGMENT_LENGTH_M)


def discretise(detections: list[Detection], side: bool, av_lane: Lane = Lane.LEFT) -> GridSnapshot:
    """Map detections onto the grid and build the planner's snapshot.

    Left-lane detections ahead of the AV become the (at most three nearest)
    front vehicles; the front-right detection becomes the oncoming vehicle.
    Detections falling into the same cell merge into one occupant and the
    merge is recorded.  With ``side`` true and no oncoming mapped, the
    oncoming vehicle is pinned alongside at the AV's cell.
    """
    counts: dict[int, int] = {}
    oncoming = None
    for det in detections:
        seg = segment_of(det.jittered_s)
        if not 0 <= seg <= GRID_MAX:
            continue
        if det.provenance is DetectionSource.FRONT_RIGHT:
            oncoming = seg if oncoming is None else min(oncoming, seg)
        elif det.lane is Lane.LEFT:
            counts[seg] = counts.get(seg, 0) + 1
    merged = tuple(sorted(s for s, n in counts.items() if n > 1))
    front = tuple(sorted(s for s in counts if s > AV_SEGMENT))[:3]

    if side and oncoming is None:
        oncoming = AV_SEGMENT

    ids = frozenset(d.source_id for d in detections if d.source_id is not None)
    snapshot = GridSnapshot(
        GridState(av_lane, front, oncoming),
        merged,
        ids,
        own_cell_left=AV_SEGMENT in counts,
    )
    if merged:
        log.debug("discretise merged detections at segments %s", merged)
    return snapshot


def sense(
    world: ContinuousWorld,
    cfg: SensorConfig,
    rng: np.random.Generator,
    av_lane: Lane | None = None,
) -> GridSnapshot:
    """One full sensor sweep discretised into a snapshot."""
    detections = list(scan_360(world, cfg, rng))
    front = scan_front_right(world, cfg, rng)
    if front is not None:
        detections.append(front)
    side = scan_right_side(world, cfg, rng)
    lane = av_lane if av_lane is not None else world.av.lane
    return discretise(detections, side, lane)


@dataclass(frozen=True)
class SnapshotAudit:
    """Snapshot-vs-ground-truth comparison used for failure attribution."""

    missing_segments: tuple[int, ...]
    spurious_segments: tuple[int, ...]
    oncoming_missing: bool
    oncoming_spurious: bool
    merged_segments: tuple[int, ...]

    @property
    def clean(self) -> bool:
        return not (
            self.missing_segments
            or self.spurious_segments
            or self.oncoming_missing
            or self.oncoming_spurious
            or self.merged_segments
        )


def audit_snapshot(snapshot: GridSnapshot, world: ContinuousWorld, cfg: SensorConfig) -> SnapshotAudit:
    """Compare a (possibly noisy) snapshot against a noise-free rescan."""
    rng = np.random.default_rng(0)  # the noise-free scan draws nothing
    ideal = sense(world, cfg.noise_free(), rng, snapshot.state.av_lane)
    actual_fv = set(snapshot.state.front_vehicles)
    ideal_fv = set(ideal.state.front_vehicles)
    audit = SnapshotAudit(
        missing_segments=tuple(sorted(ideal_fv - actual_fv)),
        spurious_segments=tuple(sorted(actual_fv - ideal_fv)),
        oncoming_missing=ideal.state.oncoming is not None and snapshot.state.oncoming is None,
        oncoming_spurious=ideal.state.oncoming is None and snapshot.state.oncoming is not None,
        merged_segments=snapshot.merged_segments,
    )
    if not audit.clean:
        log.debug(
            "snapshot deviates from ground truth: missing=%s spurious=%s "
            "ov_missing=%s ov_spurious=%s merged=%s",
            audit.missing_segments,
            audit.spurious_segments,
            audit.oncoming_missing,
            audit.oncoming_spurious,
            audit.merged_segments,
        )
    return audit
