"""
Experiment runner
Single runs with artifacts + manifest, and paired EBL/DBPL sweeps run in parallel
with Semaphore-based concurrency and a memory guard.
"""

import asyncio
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple

import pandas as pd
import psutil

from config import MAX_JOBS, MEMORY_THRESHOLD, SOLVER_DEBUG_DUMP
from engine.metrics import (
    aggregates_of, event_frame, metrics_frame, sha256_of, split_by_lane, trajectory_frame, write_csv,
)
from engine.simulator import CorridorSimulator, generate_arrivals
from models.domain import ScenarioConfig, Strategy
from models.errors import RunFailure
from utils.logger import get_logger

logger = get_logger(__name__)

SWEEP_AXES = ("mpr", "Q_veh", "bus_interval", "x_s", "right_turn_ratio")
MEMORY_POLL_S = 1.0


@dataclass
class RunArtifacts:
    """Paths written by one run plus its aggregate block"""
    out_dir: Path
    trajectory: Path
    metrics: Path
    events: Path
    manifest: Path
    aggregates: List[Dict[str, Any]] = field(default_factory=list)
    lanes: Dict[str, Path] = field(default_factory=dict)


def run(config: ScenarioConfig, out_dir: Path, emit_trajectories: bool = False) -> RunArtifacts:
    """
    Simulate one (config, seed, strategy) and write its artifacts

    Files: trajectory.csv, metrics.csv, events.csv, manifest.json, and with
    emit_trajectories one time-space extract per lane.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()

    dump = out_dir / "solver_candidates.csv" if SOLVER_DEBUG_DUMP else None
    if dump is not None and dump.exists():
        dump.unlink()
    simulator = CorridorSimulator(config, arrivals=generate_arrivals(config), solver_dump=dump)
    result = simulator.run()

    trajectory = trajectory_frame(result.trajectory)
    metrics = metrics_frame(result.records, config.warmup)
    artifacts = RunArtifacts(
        out_dir=out_dir,
        trajectory=write_csv(trajectory, out_dir / "trajectory.csv"),
        metrics=write_csv(metrics, out_dir / "metrics.csv"),
        events=write_csv(event_frame(result.events), out_dir / "events.csv"),
        manifest=out_dir / "manifest.json",
        aggregates=_plain_records(aggregates_of(metrics)),
    )
    if emit_trajectories:
        for lane, frame in split_by_lane(trajectory).items():
            artifacts.lanes[lane] = write_csv(frame, out_dir / f"trajectory_{lane.lower()}.csv")

    hashed = [artifacts.trajectory, artifacts.metrics, artifacts.events, *artifacts.lanes.values()]
    manifest = {
        "config": config.model_dump(mode="json"),
        "artifacts": {path.name: sha256_of(path) for path in hashed},
        "grants": result.grants,
        "incidents": result.incidents,
        "conservation": result.conservation,
        "wall_seconds": round(time.perf_counter() - started, 3),
    }
    artifacts.manifest.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info(f"run written to {out_dir} ({manifest['wall_seconds']}s)")
    return artifacts


def _plain_records(frame: pd.DataFrame) -> List[Dict[str, Any]]:
    """Rows as plain dicts, missing values as None"""
    return frame.astype(object).where(frame.notna(), None).to_dict("records")


@dataclass(frozen=True)
class SweepSpec:
    """One axis swept over values, every value run with every seed under both strategies"""
    base: ScenarioConfig
    axis: str
    values: Tuple[float, ...]
    seeds: Tuple[int, ...] = (1, 2, 3, 4, 5)

    def __post_init__(self) -> None:
        if self.axis not in SWEEP_AXES:
            raise ValueError(f"sweep axis must be one of {', '.join(SWEEP_AXES)}, got '{self.axis}'")
        if not self.values:
            raise ValueError("sweep needs at least one value")
        if not self.seeds:
            raise ValueError("sweep needs at least one seed")

    def configs(self) -> List[Tuple[float, ScenarioConfig]]:
        """Validated config per value (raises ScenarioRangeError naming the key)"""
        return [(value, self.base.with_values(**{self.axis: value})) for value in self.values]

    def cells(self) -> List[Tuple[float, int, Strategy, ScenarioConfig]]:
        cells = []
        for value, config in self.configs():
            for seed in self.seeds:
                for strategy in (Strategy.EBL, Strategy.DBPL):
                    cells.append((value, seed, strategy, config.with_values(seed=seed, strategy=strategy)))
        return cells


@dataclass
class ComparisonReport:
    """Per-run aggregates plus paired DBPL-vs-EBL reductions"""
    runs: pd.DataFrame
    travel_time: pd.DataFrame
    reduction: pd.DataFrame
    paths: Dict[str, Path] = field(default_factory=dict)


def _cell_dir(out_dir: Path, axis: str, value: float, seed: int, strategy: Strategy) -> Path:
    return out_dir / f"{axis}={value:g}" / f"seed_{seed}" / strategy.value.lower()


def _run_cell(payload: Tuple[Dict[str, Any], str, bool]) -> List[Dict[str, Any]]:
    """Process-pool entry point; takes plain data so it pickles"""
    config_values, out_dir, emit = payload
    config = ScenarioConfig(**config_values)
    return run(config, Path(out_dir), emit_trajectories=emit).aggregates


def _wait_for_memory() -> None:
    while psutil.virtual_memory().percent > MEMORY_THRESHOLD:
        logger.warning(
            f"memory at {psutil.virtual_memory().percent:.1f}% (threshold {MEMORY_THRESHOLD:.0f}%), holding next cell"
        )
        time.sleep(MEMORY_POLL_S)


async def _run_cells(payloads: Sequence[Tuple[Dict[str, Any], str, bool]], jobs: int) -> List[Any]:
    semaphore = asyncio.Semaphore(jobs)
    loop = asyncio.get_running_loop()

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        async def one(payload):
            async with semaphore:
                await loop.run_in_executor(None, _wait_for_memory)
                return await loop.run_in_executor(pool, _run_cell, payload)

        return await asyncio.gather(*(one(p) for p in payloads), return_exceptions=True)


def compare(sweep: SweepSpec, out_dir: Path, jobs: int = MAX_JOBS, emit_trajectories: bool = False) -> ComparisonReport:
    """
    Paired EBL/DBPL comparison over a sweep

    Raises:
        RunFailure: first failing cell in (value, seed, strategy) order
    """
    out_dir = Path(out_dir)
    cells = sweep.cells()
    payloads = [
        (config.model_dump(), str(_cell_dir(out_dir, sweep.axis, value, seed, strategy)), emit_trajectories)
        for value, seed, strategy, config in cells
    ]
    logger.info(f"sweep {sweep.axis}={list(sweep.values)} seeds={list(sweep.seeds)}: {len(cells)} runs, jobs={jobs}")

    if jobs <= 1:
        results: List[Any] = []
        for payload in payloads:
            try:
                results.append(_run_cell(payload))
            except Exception as exc:
                results.append(exc)
                break
    else:
        results = asyncio.run(_run_cells(payloads, jobs))

    rows: List[Dict[str, Any]] = []
    for (value, seed, strategy, _), result in zip(cells, results):
        if isinstance(result, BaseException):
            raise RunFailure(f"{sweep.axis}={value:g}", seed, strategy.value, repr(result)) from result
        for aggregate in result:
            rows.append({"axis": sweep.axis, "value": value, "seed": seed, "strategy": strategy.value, **aggregate})
        logger.info(f"cell {sweep.axis}={value:g} seed={seed} {strategy.value} done")

    report = build_report(pd.DataFrame(rows))
    report.paths = write_report(report, out_dir)
    return report


def build_report(runs: pd.DataFrame) -> ComparisonReport:
    """Across-seed means and paired reductions (EBL - DBPL) / EBL · 100"""
    runs = runs.copy()
    runs["travel_time"] = pd.to_numeric(runs["travel_time"], errors="coerce")
    keys = ["axis", "value", "class", "movement"]
    travel_time = (
        runs.groupby(keys + ["strategy"], sort=True)["travel_time"]
        .agg(mean="mean", std="std")
        .reset_index()
    )

    paired = runs.pivot_table(index=keys + ["seed"], columns="strategy", values="travel_time", aggfunc="first")
    paired = paired.reset_index()
    if "EBL" in paired and "DBPL" in paired:
        valid = paired["EBL"].notna() & paired["DBPL"].notna() & (paired["EBL"] > 0)
        paired = paired[valid].copy()
        paired["reduction_pct"] = (paired["EBL"] - paired["DBPL"]) / paired["EBL"] * 100.0
    else:
        paired = paired.iloc[0:0].assign(reduction_pct=pd.Series(dtype="float64"))
    reduction = (
        paired.groupby(keys, sort=True)["reduction_pct"]
        .agg(mean="mean", std="std")
        .reset_index()
    )
    return ComparisonReport(runs=runs, travel_time=travel_time, reduction=reduction)


def write_report(report: ComparisonReport, out_dir: Path) -> Dict[str, Path]:
    """report.csv plus one plot-data file per chart"""
    axis = report.runs["axis"].iloc[0] if len(report.runs) else "axis"
    classes = report.travel_time[report.travel_time["movement"] == "ALL"]
    return {
        "report": write_csv(report.runs, out_dir / "report.csv"),
        "travel_time": write_csv(report.travel_time, out_dir / f"travel_time_vs_{axis}.csv"),
        "reduction": write_csv(report.reduction, out_dir / f"reduction_vs_{axis}.csv"),
        "class_bars": write_csv(classes.reset_index(drop=True), out_dir / "class_bars.csv"),
    }
