"""Seeded experiment harness: single runs, batches and their aggregation.

A run drives the sense -> plan -> execute -> recycle loop until a stop
condition (ground-truth collision, planner failure, or a configured limit)
and reports the Table-style metrics.  Sub-streams are derived from the
master seed with a fixed splitting rule, so any run or batch is bit-for-bit
reproducible from its configuration.
"""

from __future__ import annotations

import json
import logging
import statistics
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .grid import Lane, format_state
from .planner import NoPath, Plan, SearchLimits
from .sensing import SensorConfig
from .sim import (
    DEFAULT_TICK_S,
    FailureCause,
    PlanExecutor,
    RunMetrics,
    SpawnConfig,
    build_world,
    classify_failure,
    detect_collision,
    maybe_replan,
    spawn_despawn,
    step,
)

log = logging.getLogger(__name__)

CONFIG_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    max_km: float | None = 2.0
    max_sim_s: float | None = None
    max_overtakes: int | None = None
    n_left: int = 6
    n_right: int = 4
    sensors: SensorConfig = field(default_factory=SensorConfig)
    spawn: SpawnConfig = field(default_factory=SpawnConfig)
    search: SearchLimits = field(default_factory=SearchLimits)
    event_log_path: str | None = None
    trace_decimation: int = 0

    def to_json(self) -> str:
        payload = {
            "schema_version": CONFIG_SCHEMA_VERSION,
            "seed": self.seed,
            "max_km": self.max_km,
            "max_sim_s": self.max_sim_s,
            "max_overtakes": self.max_overtakes,
            "n_left": self.n_left,
            "n_right": self.n_right,
            "sensors": asdict(self.sensors),
            "spawn": asdict(self.spawn),
            "search": asdict(self.search),
            "event_log_path": self.event_log_path,
            "trace_decimation": self.trace_decimation,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "RunConfig":
        payload = json.loads(text)
        version = payload.pop("schema_version", None)
        if version != CONFIG_SCHEMA_VERSION:
            raise ValueError(f"unsupported config schema_version: {version!r}")
        known = {
            "seed",
            "max_km",
            "max_sim_s",
            "max_overtakes",
            "n_left",
            "n_right",
            "sensors",
            "spawn",
            "search",
            "event_log_path",
            "trace_decimation",
        }
        unknown = payload.keys() - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        for name, cls in (("sensors", SensorConfig), ("spawn", SpawnConfig), ("search", SearchLimits)):
            if name in payload:
                raw = dict(payload[name])
                for key, value in raw.items():
                    if isinstance(value, list):
                        raw[key] = tuple(value)
                payload[name] = cls(**raw)
        return RunConfig(**payload)


def run_rng(master_seed: int, run_index: int = 0) -> np.random.Generator:
    """The documented seed-splitting rule: one child stream per run index."""
    return np.random.default_rng(np.random.SeedSequence(entropy=master_seed, spawn_key=(run_index,)))


def run_single(
    config: RunConfig,
    run_index: int = 0,
    event_sink: Callable[[dict], None] | None = None,
) -> RunMetrics:
    """One seeded run of the full loop; returns its metrics.

    Simulation time excludes planning, which happens at frozen world time
    between action windows.
    """
    events: list[dict] = []
    writer = None
    if config.event_log_path is not None:
        writer = open(config.event_log_path, "w", encoding="utf-8")

    def emit(record: dict) -> None:
        events.append(record)
        if writer is not None:
            writer.write(json.dumps(record, sort_keys=True) + "\n")
        if event_sink is not None:
            event_sink(record)

    try:
        return _run_loop(config, run_index, emit)
    finally:
        if writer is not None:
            writer.close()


def _run_loop(config: RunConfig, run_index: int, emit: Callable[[dict], None]) -> RunMetrics:
    rng = run_rng(config.seed, run_index)
    world = build_world(rng, config.spawn, config.n_left, config.n_right)
    executor = PlanExecutor()
    dt = DEFAULT_TICK_S

    start_s = world.av.s
    overtaken = 0
    ahead = {v.vid for v in world.others if v.lane is Lane.LEFT and v.s > world.av.s}
    tick = 0

    def metrics(cause: FailureCause) -> RunMetrics:
        m = RunMetrics(
            sim_time=world.clock,
            overtaken_count=overtaken,
            distance_km=(world.av.s - start_s) / 1000.0,
            failure_cause=cause,
        )
        emit(
            {
                "event": "halt",
                "t": world.clock,
                "cause": cause.value,
                "overtaken": overtaken,
                "distance_km": m.distance_km,
            }
        )
        return m

    emit({"event": "start", "seed": config.seed, "run_index": run_index})
    while True:
        if executor.at_boundary:
            clock_before = world.clock
            outcome = maybe_replan(world, executor, config.sensors, config.search)
            assert world.clock == clock_before, "planning must not advance world time"
            if outcome.triggered:
                if isinstance(outcome.result, NoPath):
                    emit(
                        {
                            "event": "no_path",
                            "t": world.clock,
                            "trigger": outcome.trigger,
                            "reason": outcome.result.reason,
                            "snapshot": format_state(outcome.snapshot.state),
                        }
                    )
                    return metrics(FailureCause.PLANNER_NO_PATH)
                if isinstance(outcome.result, Plan):
                    emit(
                        {
                            "event": "plan",
                            "t": world.clock,
                            "trigger": outcome.trigger,
                            "mode": outcome.result.mode.value,
                            "actions": [a.value for a in outcome.result.actions],
                            "states_expanded": outcome.result.states_expanded,
                            "snapshot": format_state(outcome.snapshot.state),
                        }
                    )
                elif outcome.trigger in ("new_vehicle_kept", "emergency"):
                    emit({"event": outcome.trigger, "t": world.clock})
            executor.try_start(world, config.sensors)

        holding = executor.at_boundary
        step(world, dt)
        if holding:
            executor.note_hold(dt)
        tick += 1

        for event in spawn_despawn(world, config.spawn):
            event["t"] = world.clock
            emit(event)
            ahead.discard(event["despawned"])

        for v in world.others:
            if v.lane is not Lane.LEFT:
                continue
            if v.s > world.av.s:
                ahead.add(v.vid)
            elif v.vid in ahead:
                ahead.discard(v.vid)
                overtaken += 1
                emit({"event": "overtake", "t": world.clock, "vid": v.vid, "count": overtaken})

        hit = detect_collision(world)
        if hit is not None:
            emit(
                {
                    "event": "collision",
                    "t": world.clock,
                    "vid": hit.vid,
                    "delta_s": hit.delta_s,
                    "lane": hit.lane.value,
                }
            )
            return metrics(classify_failure(executor.audit))

        executor.finish_elapsed_window(world)

        if config.trace_decimation and tick % config.trace_decimation == 0:
            emit(
                {
                    "event": "trace",
                    "t": world.clock,
                    "av_s": world.av.s,
                    "av_speed": world.av.speed,
                    "av_lane": world.av.lane.value,
                    "others": [[v.vid, v.lane.value, round(v.s - world.av.s, 3)] for v in world.others],
                }
            )

        distance_km = (world.av.s - start_s) / 1000.0
        if config.max_km is not None and distance_km >= config.max_km:
            return metrics(FailureCause.MANUAL_STOP)
        if config.max_sim_s is not None and world.clock >= config.max_sim_s:
            return metrics(FailureCause.MANUAL_STOP)
        if config.max_overtakes is not None and overtaken >= config.max_overtakes:
            return metrics(FailureCause.MANUAL_STOP)


@dataclass(frozen=True)
class BatchSummary:
    runs: tuple[RunMetrics, ...]
    median_distance_km: float
    median_overtaken: float
    total_distance_km: float
    total_overtaken: int
    total_sim_time: float
    failure_histogram: dict[str, int]


def run_batch(config: RunConfig, n_runs: int) -> BatchSummary:
    """Independent seeded runs derived from the master seed, plus aggregates."""
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    runs = []
    for i in range(n_runs):
        run_config = config
        if config.event_log_path is not None:
            path = Path(config.event_log_path)
            run_config = replace(config, event_log_path=str(path.with_suffix(f".run{i}{path.suffix}")))
        runs.append(run_single(run_config, run_index=i))
    histogram: dict[str, int] = {}
    for m in runs:
        histogram[m.failure_cause.value] = histogram.get(m.failure_cause.value, 0) + 1
    return BatchSummary(
        runs=tuple(runs),
        median_distance_km=statistics.median(m.distance_km for m in runs),
        median_overtaken=statistics.median(m.overtaken_count for m in runs),
        total_distance_km=sum(m.distance_km for m in runs),
        total_overtaken=sum(m.overtaken_count for m in runs),
        total_sim_time=sum(m.sim_time for m in runs),
        failure_histogram=histogram,
    )


def format_batch_table(summary: BatchSummary) -> str:
    """Aligned human-readable batch table (one row per run, then aggregates)."""
    header = f"{'Run':>3}  {'Runtime':>9}  {'Vehicles overtaken':>18}  {'Distance (km)':>13}  Failure cause"
    lines = [header, "-" * len(header)]
    for i, m in enumerate(summary.runs, start=1):
        hours, rem = divmod(int(m.sim_time), 3600)
        minutes = rem // 60
        lines.append(
            f"{i:>3}  {hours:>2d}h {minutes:02d}m  {m.overtaken_count:>18d}  "
            f"{m.distance_km:>13.1f}  {m.failure_cause.value}"
        )
    lines.append("-" * len(header))
    lines.append(
        f"medians: distance {summary.median_distance_km:.1f} km, "
        f"overtaken {summary.median_overtaken:.1f}; "
        f"totals: {summary.total_distance_km:.2f} km, {summary.total_overtaken} overtakes"
    )
    return "\n".join(lines)


def summary_records(summary: BatchSummary) -> list[dict]:
    """Machine-readable batch records (one dict per run plus one aggregate)."""
    records = [
        {
            "run": i,
            "sim_time": m.sim_time,
            "overtaken_count": m.overtaken_count,
            "distance_km": m.distance_km,
            "failure_cause": m.failure_cause.value,
        }
        for i, m in enumerate(summary.runs)
    ]
    records.append(
        {
            "median_distance_km": summary.median_distance_km,
            "median_overtaken": summary.median_overtaken,
            "total_distance_km": summary.total_distance_km,
            "total_overtaken": summary.total_overtaken,
            "total_sim_time": summary.total_sim_time,
            "failure_histogram": summary.failure_histogram,
        }
    )
    return records
