"""
Run outputs as pandas frames and fixed-format CSV files
"""

import hashlib
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np
import pandas as pd

from engine.controller import RowCommand
from engine.simulator import VehicleRecord

FLOAT_FORMAT = "%.6f"

TRAJECTORY_COLUMNS = ["t", "vehicle_id", "class", "movement", "lane", "x", "v"]
EVENT_COLUMNS = ["t", "vehicle", "action", "reason"]
METRIC_COLUMNS = [
    "record", "class", "movement", "vehicle_id", "lanes",
    "t_arrival", "t_exit", "travel_time", "count",
]

# aggregate groups: class label -> member classes
CLASS_GROUPS: Dict[str, Tuple[str, ...]] = {
    "ALL": ("HDV", "CAV", "CAB"),
    "CAR": ("HDV", "CAV"),
    "HDV": ("HDV",),
    "CAV": ("CAV",),
    "CAB": ("CAB",),
}
MOVEMENT_GROUPS: Dict[str, Tuple[str, ...]] = {
    "ALL": ("Through", "RightTurn"),
    "Through": ("Through",),
    "RightTurn": ("RightTurn",),
}


def vehicle_frame(records: Iterable[VehicleRecord], warmup: float) -> pd.DataFrame:
    """Per-vehicle rows for vehicles that arrived after the warm-up, ordered by id"""
    rows = [
        {
            "record": "vehicle",
            "class": r.vclass.value,
            "movement": r.movement.value,
            "vehicle_id": r.vehicle_id,
            "lanes": r.lanes,
            "t_arrival": r.t_arrival,
            "t_exit": r.t_exit,
            "travel_time": r.travel_time,
        }
        for r in records
        if r.t_arrival >= warmup
    ]
    frame = pd.DataFrame(rows, columns=METRIC_COLUMNS)
    frame = frame.sort_values("vehicle_id", kind="mergesort").reset_index(drop=True)
    frame["vehicle_id"] = frame["vehicle_id"].astype("Int64")
    frame["count"] = pd.Series([pd.NA] * len(frame), dtype="Int64")
    return frame


def aggregate_frame(vehicles: pd.DataFrame) -> pd.DataFrame:
    """Mean travel time per (class group, movement group); empty groups get count 0 and no mean"""
    rows: List[dict] = []
    for class_label, classes in CLASS_GROUPS.items():
        for movement_label, movements in MOVEMENT_GROUPS.items():
            subset = vehicles[vehicles["class"].isin(classes) & vehicles["movement"].isin(movements)]
            rows.append({
                "record": "aggregate",
                "class": class_label,
                "movement": movement_label,
                "travel_time": float(subset["travel_time"].mean()) if len(subset) else np.nan,
                "count": len(subset),
            })
    frame = pd.DataFrame(rows, columns=METRIC_COLUMNS)
    frame["vehicle_id"] = frame["vehicle_id"].astype("Int64")
    frame["count"] = frame["count"].astype("Int64")
    return frame


def metrics_frame(records: Sequence[VehicleRecord], warmup: float) -> pd.DataFrame:
    vehicles = vehicle_frame(records, warmup)
    return pd.concat([vehicles, aggregate_frame(vehicles)], ignore_index=True)


def trajectory_frame(rows: Sequence[Tuple]) -> pd.DataFrame:
    frame = pd.DataFrame(list(rows), columns=TRAJECTORY_COLUMNS)
    frame["vehicle_id"] = frame["vehicle_id"].astype("int64")
    for column in ("t", "x", "v"):
        frame[column] = frame[column].astype("float64")
    return frame


def event_frame(events: Sequence[RowCommand]) -> pd.DataFrame:
    rows = [
        {"t": float(e.t), "vehicle": e.vehicle_id, "action": e.action.value, "reason": e.reason}
        for e in events
    ]
    frame = pd.DataFrame(rows, columns=EVENT_COLUMNS)
    frame["t"] = frame["t"].astype("float64")
    frame["vehicle"] = frame["vehicle"].astype("int64")
    return frame


def write_csv(frame: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def sha256_of(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def aggregates_of(metrics: pd.DataFrame) -> pd.DataFrame:
    """Aggregate block of a metrics frame or file"""
    return metrics[metrics["record"] == "aggregate"][["class", "movement", "travel_time", "count"]].reset_index(drop=True)


def split_by_lane(trajectory: pd.DataFrame) -> Dict[str, pd.DataFrame]:
    """Time-space extracts, one frame per lane"""
    return {
        lane: group.reset_index(drop=True)
        for lane, group in trajectory.groupby("lane", sort=True)
    }
