"""
Configuration module for the DBPL corridor simulator
Manages environment variables, physical constants and solver knobs with strict typing
"""

import os
from typing import Literal

try:
    from dotenv import load_dotenv
    load_dotenv()
except ImportError:
    pass


def _env_bool(name: str, default: str) -> bool:
    return os.getenv(name, default).lower() in ("true", "1", "yes")


# Output / runtime
OUTPUT_DIR: str = os.getenv("DBPL_OUTPUT_DIR", "runs")
LOG_FILE: str = os.getenv("DBPL_LOG_FILE", "")
LOG_LEVEL: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = os.getenv("DBPL_LOG_LEVEL", "INFO").upper()  # type: ignore
MAX_JOBS: int = int(os.getenv("DBPL_MAX_JOBS", "2"))
MEMORY_THRESHOLD: float = float(os.getenv("DBPL_MEMORY_THRESHOLD", "85.0"))  # percent, sweep guard

# Vehicle constants (per class)
BUS_LENGTH: float = 8.0          # l_B
CAR_LENGTH: float = 4.0          # l_V
V_MAX: float = 14.0
A_MAX: float = 2.0
TAU_AUTOMATED: float = 1.0       # τ_A, CAV and CAB
TAU_HUMAN: float = 2.0           # τ_H
SPACING_AUTOMATED: float = 1.5   # d_A
SPACING_HUMAN: float = 2.5       # d_H

# Timing and lane change
ACCEL_LOSS: float = 1.5          # τ_a
REACTION_TIME: float = 0.4       # τ_r
SAFE_DISTANCE: float = 6.0       # d_safe
LANE_CHANGE_STEPS: int = int(os.getenv("DBPL_LANE_CHANGE_STEPS", "1"))  # k_lc

# Road geometry
CONTROL_LENGTH: float = 400.0
NO_CHANGE_LENGTH: float = 30.0
STOP_POSITION: float = 150.0
POCKET_LENGTH: float = 130.0
STOP_CAPACITY: int = 2

# Demand
CAR_DEMAND: float = 720.0        # veh/h
BUS_INTERVAL_MEAN: float = 60.0
BUS_INTERVAL_STD: float = 20.0
DWELL_MEAN: float = 30.0
DWELL_STD: float = 20.0
MIN_BUS_INTERVAL: float = 10.0
MIN_DWELL: float = 5.0

# Signal
CYCLE_LENGTH: float = 60.0
RED_LENGTH: float = 30.0

# Rolling horizon / optimizer
STEP_S: float = float(os.getenv("DBPL_STEP_S", "1.0"))
HORIZON_S: float = float(os.getenv("DBPL_HORIZON_S", "10.0"))
OMEGA_P: float = float(os.getenv("DBPL_OMEGA_P", "0.9"))
CANDIDATE_CAP: int = int(os.getenv("DBPL_CANDIDATE_CAP", str(2 ** 16)))
SOLVER_DEBUG_DUMP: bool = _env_bool("DBPL_SOLVER_DEBUG_DUMP", "false")
COST_TOLERANCE: float = 1e-9

# Plant
WARMUP_S: float = float(os.getenv("DBPL_WARMUP_S", "300"))
RIGHT_TURN_WINDOW_M: float = float(os.getenv("DBPL_RIGHT_TURN_WINDOW_M", "100"))
HDV_NOISE_STD: float = float(os.getenv("DBPL_HDV_NOISE_STD", "0.5"))
HDV_NOISE_CLIP: float = 1.0
IDM_EXPONENT: float = 4.0
SIGNAL_MARGIN_S: float = 0.2     # CAV/CAB arrival margin after green onset


def validate_config() -> bool:
    """
    Validate configuration settings
    Raises ValueError for settings no run can use
    """
    if STEP_S <= 0:
        raise ValueError(f"DBPL_STEP_S must be positive, got {STEP_S}")
    if HORIZON_S < 0:
        raise ValueError(f"DBPL_HORIZON_S must be non-negative, got {HORIZON_S}")
    steps = HORIZON_S / STEP_S
    if abs(steps - round(steps)) > 1e-9:
        raise ValueError("DBPL_HORIZON_S must be a multiple of DBPL_STEP_S")
    if MAX_JOBS < 1:
        raise ValueError(f"DBPL_MAX_JOBS must be at least 1, got {MAX_JOBS}")
    if not 0.0 <= OMEGA_P <= 1.0:
        raise ValueError(f"DBPL_OMEGA_P must be within [0, 1], got {OMEGA_P}")
    if CANDIDATE_CAP < 1:
        raise ValueError("DBPL_CANDIDATE_CAP must be positive")
    return True


def print_config() -> None:
    """Display current configuration settings through the structured logger"""
    from utils.logger import get_logger

    logger = get_logger("config")
    logger.info("=" * 50)
    logger.info("DBPL corridor simulator configuration")
    logger.info("=" * 50)
    logger.info(f"Output dir: {OUTPUT_DIR} | log file: {LOG_FILE or '-'} | level: {LOG_LEVEL}")
    logger.info(f"Jobs: {MAX_JOBS} | memory threshold: {MEMORY_THRESHOLD:.0f}%")
    logger.info(f"Step: {STEP_S}s | horizon: {HORIZON_S}s | omega_p: {OMEGA_P} | k_lc: {LANE_CHANGE_STEPS}")
    logger.info(f"Candidate cap: {CANDIDATE_CAP} | solver dump: {'on' if SOLVER_DEBUG_DUMP else 'off'}")
    logger.info(f"Warm-up: {WARMUP_S}s | right-turn window: {RIGHT_TURN_WINDOW_M}m | HDV noise: {HDV_NOISE_STD}")
    logger.info("=" * 50)
