#!/usr/bin/env python3
"""
DBPL corridor simulator - command line entry point

Single run:
    python src/cli.py --scenario scenarios/benchmark_a.cfg --strategy dbpl --seed 3 --out runs/a_dbpl_3
Paired sweep (EBL and DBPL for every value and seed):
    python src/cli.py --scenario scenarios/benchmark_a.cfg --sweep mpr=0.2,0.4 --seeds 1,2,3,4,5 --jobs 4

Exit code 0 on success; otherwise 1 with a single JSON line on stderr:
    {"error": "<class>", "message": "...", "key" | "line": ...}
"""

import argparse
import json
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from config import MAX_JOBS, OUTPUT_DIR, print_config, validate_config
from engine.experiment import SWEEP_AXES, SweepSpec, compare, run
from models.domain import ScenarioConfig, build_config
from models.errors import ScenarioParseError, ScenarioRangeError
from models.scenario import load_scenario_file
from utils.error_logger import log_run_error
from utils.logger import get_logger

logger = get_logger("cli")

DEFAULT_SEEDS = (1, 2, 3, 4, 5)


def _parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="dbpl",
        description="Signalized-approach microsimulation with dynamic bus priority lane control",
    )
    parser.add_argument("--scenario", type=Path, help="key=value scenario file (benchmark defaults if omitted)")
    parser.add_argument("--strategy", choices=["ebl", "dbpl"], type=str.lower, help="override the scenario strategy")
    parser.add_argument("--seed", type=int, help="override the scenario seed")
    parser.add_argument("--out", type=Path, default=None, help=f"output directory (default: {OUTPUT_DIR})")
    parser.add_argument("--sweep", help=f"paired sweep '<axis>=v1,v2,...', axis in {{{', '.join(SWEEP_AXES)}}}")
    parser.add_argument("--seeds", help="comma-separated seeds for --sweep (default: 1,2,3,4,5)")
    parser.add_argument("--emit-trajectories", action="store_true", help="write per-lane time-space extracts")
    parser.add_argument("--jobs", type=int, default=MAX_JOBS, help="concurrent sweep cells")
    parser.add_argument("--show-config", action="store_true", help="log the active DBPL_* settings before running")
    return parser.parse_args(argv)


def parse_sweep(text: str) -> Tuple[str, Tuple[float, ...]]:
    """'mpr=0.2,0.4' -> ('mpr', (0.2, 0.4))"""
    if "=" not in text:
        raise ValueError(f"--sweep expects <axis>=v1,v2,..., got '{text}'")
    axis, raw = (part.strip() for part in text.split("=", 1))
    try:
        values = tuple(float(v) for v in raw.split(",") if v.strip())
    except ValueError:
        raise ValueError(f"--sweep values must be numbers, got '{raw}'") from None
    return axis, values


def parse_seeds(text: Optional[str]) -> Tuple[int, ...]:
    if not text:
        return DEFAULT_SEEDS
    try:
        return tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise ValueError(f"--seeds must be comma-separated integers, got '{text}'") from None


def load_config(args: argparse.Namespace) -> ScenarioConfig:
    config = load_scenario_file(args.scenario) if args.scenario else build_config({})
    overrides = {}
    if args.strategy:
        overrides["strategy"] = args.strategy
    if args.seed is not None:
        overrides["seed"] = args.seed
    return config.with_values(**overrides) if overrides else config


def error_payload(exc: BaseException) -> dict:
    payload = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ScenarioRangeError):
        payload["key"] = exc.key
    elif isinstance(exc, ScenarioParseError):
        payload["line"] = exc.line
    return payload


def main(argv: Optional[List[str]] = None) -> int:
    args = _parse_args(argv)
    try:
        validate_config()
        if args.show_config:
            print_config()
        config = load_config(args)
        out_dir = args.out or Path(OUTPUT_DIR)

        if args.sweep:
            axis, values = parse_sweep(args.sweep)
            sweep = SweepSpec(base=config, axis=axis, values=values, seeds=parse_seeds(args.seeds))
            report = compare(sweep, out_dir, jobs=args.jobs, emit_trajectories=args.emit_trajectories)
            for name, path in report.paths.items():
                logger.info(f"{name}: {path}")
        else:
            artifacts = run(config, out_dir, emit_trajectories=args.emit_trajectories)
            logger.info(f"manifest: {artifacts.manifest}")
        return 0

    except Exception as exc:
        log_run_error(f"cli {' '.join(argv if argv is not None else sys.argv[1:])}", exc)
        print(json.dumps(error_payload(exc)), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
