"""
Run error logger utility
Writes failed runs to dbpl_error.log in the project root
"""

from __future__ import annotations

import traceback
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional


def log_run_error(message: str, error: Optional[Exception] = None, log_path: Optional[Path] = None) -> None:
    """
    Append error details to dbpl_error.log

    Args:
        message: Human-readable context (scenario, seed, strategy)
        error: Optional exception instance
        log_path: Override for the log location (tests)
    """
    try:
        path = log_path or Path(__file__).resolve().parents[2] / "dbpl_error.log"
        timestamp = datetime.now(timezone.utc).isoformat()
        error_type = type(error).__name__ if error else "None"
        error_message = str(error) if error else ""
        error_trace = "".join(traceback.format_exception(type(error), error, error.__traceback__)) if error else ""

        with path.open("a", encoding="utf-8") as log_file:
            log_file.write(f"{timestamp} | {message} | {error_type} | {error_message}\n")
            if error_trace:
                log_file.write(error_trace + "\n")
    except Exception:
        # Logging must never break the main flow
        pass
