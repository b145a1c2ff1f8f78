"""
Core data model shared by the estimator, optimizer, controller and simulator
Every record is an immutable pydantic model once constructed
"""

import math
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from config import (
    BUS_INTERVAL_MEAN, BUS_INTERVAL_STD, CAR_DEMAND, CONTROL_LENGTH, CYCLE_LENGTH,
    DWELL_MEAN, DWELL_STD, HDV_NOISE_STD, HORIZON_S, LANE_CHANGE_STEPS, NO_CHANGE_LENGTH,
    OMEGA_P, POCKET_LENGTH, RED_LENGTH, RIGHT_TURN_WINDOW_M, STEP_S, STOP_CAPACITY,
    STOP_POSITION, WARMUP_S,
)
from models.errors import ScenarioRangeError


class VehicleClass(str, Enum):
    """Vehicle class"""
    HDV = "HDV"   # human-driven car
    CAV = "CAV"   # connected automated car
    CAB = "CAB"   # connected automated bus, bus lane only


class Movement(str, Enum):
    THROUGH = "Through"
    RIGHT_TURN = "RightTurn"


class Lane(str, Enum):
    GENERAL = "General"
    BUS = "Bus"
    POCKET = "Pocket"
    DEPARTED = "Departed"


class Phase(str, Enum):
    RED = "Red"
    GREEN = "Green"


class Strategy(str, Enum):
    EBL = "EBL"     # exclusive bus lane baseline
    DBPL = "DBPL"   # dynamic bus priority lane


class DwellRecord(BaseModel):
    """Bus dwell state at a berth"""
    model_config = ConfigDict(frozen=True)

    remaining_s: float = Field(..., ge=0, description="Dwell time left")
    stop_index: int = Field(0, ge=0, description="Berth index, 0 = front berth at x_s")


class VehicleState(BaseModel):
    """
    One vehicle at one time step

    Positions are front-bumper positions along the corridor (0 = entry).
    Passed vehicles appear as ghosts with x >= x_c and t_stop_bar set.
    Virtual vehicles live in the bus lane and mirror one general-lane CAV.
    """
    model_config = ConfigDict(frozen=True)

    id: int = Field(..., description="Unique id; virtual mirrors use the negated id of their CAV")
    vclass: VehicleClass = Field(..., description="HDV, CAV or CAB")
    movement: Movement = Field(Movement.THROUGH, description="Through or RightTurn")
    lane: Lane = Field(..., description="Current lane")
    x: float = Field(..., description="Front bumper position (m)")
    v: float = Field(..., ge=0, description="Speed (m/s)")
    length: float = Field(..., gt=0, description="Vehicle length (m)")
    is_virtual: bool = Field(False, description="Bus-lane placeholder for a general-lane CAV")
    mirror_of: Optional[int] = Field(None, description="CAV id a bus-lane mirror stands for")
    dwell: Optional[DwellRecord] = Field(None, description="Set while a bus occupies a berth")
    t_stop_bar: Optional[float] = Field(None, description="Realized stop-bar crossing time")
    t_entrance: Optional[float] = Field(None, description="Realized pocket-entrance crossing time")
    v_entrance: Optional[float] = Field(None, description="Speed at the pocket-entrance crossing")

    @property
    def rear(self) -> float:
        return self.x - self.length

    @property
    def is_bus(self) -> bool:
        return self.vclass == VehicleClass.CAB

    @property
    def is_cav(self) -> bool:
        return self.vclass == VehicleClass.CAV

    @property
    def is_through(self) -> bool:
        return self.movement == Movement.THROUGH


class Corridor(BaseModel):
    """Immutable approach geometry"""
    model_config = ConfigDict(frozen=True)

    x_c: float = Field(..., gt=0, description="Stop-bar position")
    x_n: float = Field(..., description="No-changing-zone start (absolute)")
    x_w: Optional[float] = Field(None, description="Pocket-entrance position, None without a pocket")
    x_s: float = Field(..., gt=0, description="Bus-stop position (front berth)")
    control_len: float = Field(..., gt=0)
    pocket_len: Optional[float] = Field(None)
    stop_capacity: int = Field(STOP_CAPACITY, ge=1, description="Number of berths")

    @model_validator(mode="after")
    def _check_order(self) -> "Corridor":
        if self.x_w is not None:
            if not 0 < self.x_s < self.x_w < self.x_n < self.x_c:
                raise ValueError("corridor requires 0 < x_s < x_w < x_n < x_c")
        elif not 0 < self.x_s < self.x_n < self.x_c:
            raise ValueError("corridor requires 0 < x_s < x_n < x_c")
        return self

    @property
    def has_pocket(self) -> bool:
        return self.x_w is not None


class SignalPlan(BaseModel):
    """
    Fixed cycle, red first: red occupies [n·t_c, n·t_c + t_r),
    green occupies [n·t_c + t_r, (n+1)·t_c)
    """
    model_config = ConfigDict(frozen=True)

    t_c: float = Field(CYCLE_LENGTH, gt=0, description="Cycle length (s)")
    t_r: float = Field(RED_LENGTH, gt=0, description="Red plus amber (s)")

    @model_validator(mode="after")
    def _check_split(self) -> "SignalPlan":
        if self.t_r >= self.t_c:
            raise ValueError("t_r must be shorter than t_c")
        return self

    @property
    def t_g(self) -> float:
        return self.t_c - self.t_r

    def cycle_start(self, t: float) -> float:
        """Start of the cycle containing t (floor convention)"""
        return math.floor(t / self.t_c) * self.t_c

    def phase_at(self, t: float) -> Phase:
        return Phase.RED if (t % self.t_c) < self.t_r else Phase.GREEN

    def release_time(self, t: float, extra: float = 0.0) -> float:
        """Earliest admissible stop-bar time >= t; extra delays the green onset (start-up loss)"""
        return max(t, self.cycle_start(t) + self.t_r + extra)

    def green_remaining(self, t: float) -> float:
        if self.phase_at(t) == Phase.RED:
            return 0.0
        return self.cycle_start(t) + self.t_c - t

    def next_green(self, t: float) -> float:
        """t itself when green, otherwise the next green onset"""
        return self.release_time(t)


class PlanningWindow(BaseModel):
    """Rolling-horizon step set K = {k0, k0+dk, ..., k0+h}"""
    model_config = ConfigDict(frozen=True)

    k0: float = Field(..., ge=0)
    dk: float = Field(STEP_S, gt=0)
    h: float = Field(HORIZON_S, ge=0)

    @model_validator(mode="after")
    def _check_divides(self) -> "PlanningWindow":
        n = self.h / self.dk
        if abs(n - round(n)) > 1e-9:
            raise ValueError("dk must divide h")
        return self

    @property
    def steps(self) -> List[float]:
        n = int(round(self.h / self.dk))
        return [self.k0 + i * self.dk for i in range(n + 1)]


class Grant(BaseModel):
    """Right of way for one general-lane CAV"""
    model_config = ConfigDict(frozen=True)

    vehicle_id: int
    predecessor: Optional[int] = Field(None, description="Intended bus-lane leader after the change")
    follower: Optional[int] = Field(None, description="Intended bus-lane follower after the change")


class RowPlan(BaseModel):
    """Optimizer output: one recommendation time shared by every grant"""
    model_config = ConfigDict(frozen=True)

    k_c: float
    grants: Tuple[Grant, ...] = ()
    objective: float = Field(..., description="Weighted time Z of the chosen decision")

    @field_validator("grants")
    @classmethod
    def _one_grant_per_vehicle(cls, grants: Tuple[Grant, ...]) -> Tuple[Grant, ...]:
        ids = [g.vehicle_id for g in grants]
        if len(ids) != len(set(ids)):
            raise ValueError("at most one grant per vehicle")
        return grants

    @property
    def granted_ids(self) -> List[int]:
        return [g.vehicle_id for g in self.grants]

    @property
    def is_empty(self) -> bool:
        return not self.grants


class ScenarioConfig(BaseModel):
    """
    One run's full configuration; defaults are the benchmark setup
    Field names double as the scenario file keys
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    Q_veh: float = Field(CAR_DEMAND, ge=0, le=3600, description="Through car demand (veh/h)")
    bus_interval: float = Field(BUS_INTERVAL_MEAN, gt=0, description="Mean bus headway (s)")
    bus_interval_std: float = Field(BUS_INTERVAL_STD, ge=0)
    dwell_mean: float = Field(DWELL_MEAN, ge=0)
    dwell_std: float = Field(DWELL_STD, ge=0)
    right_turn_ratio: float = Field(0.0, ge=0, le=1)
    mpr: float = Field(0.0, ge=0, le=1, description="Share of cars that are CAVs")
    omega_p: float = Field(OMEGA_P, ge=0, le=1, description="Bus weight in the objective")
    seed: int = Field(1, ge=0)
    duration: float = Field(1800.0, ge=0, description="Simulated seconds")
    strategy: Strategy = Field(Strategy.EBL)
    pocket: bool = Field(False, description="Right-turn pocket present")
    control_len: float = Field(CONTROL_LENGTH, gt=0, description="Entry to stop bar (x_c)")
    no_change_len: float = Field(NO_CHANGE_LENGTH, ge=0)
    pocket_len: float = Field(POCKET_LENGTH, gt=0)
    x_s: float = Field(STOP_POSITION, gt=0, description="Bus-stop position")
    stop_capacity: int = Field(STOP_CAPACITY, ge=1)
    t_c: float = Field(CYCLE_LENGTH, gt=0)
    t_r: float = Field(RED_LENGTH, gt=0)
    step: float = Field(STEP_S, gt=0, description="Planning step dk (s)")
    horizon: float = Field(HORIZON_S, ge=0, description="Planning horizon h (s)")
    k_lc: int = Field(LANE_CHANGE_STEPS, ge=0, description="Lane-change duration in steps")
    warmup: float = Field(WARMUP_S, ge=0)
    right_turn_window: float = Field(RIGHT_TURN_WINDOW_M, ge=0, description="D_rt upstream of x_w")
    hdv_noise_std: float = Field(HDV_NOISE_STD, ge=0)

    @field_validator("strategy", mode="before")
    @classmethod
    def _normalize_strategy(cls, value: Any) -> Any:
        if isinstance(value, str):
            return value.strip().upper()
        return value

    @model_validator(mode="after")
    def _check_geometry(self) -> "ScenarioConfig":
        if self.t_r >= self.t_c:
            raise ScenarioRangeError("t_r", "must be shorter than t_c")
        n = self.horizon / self.step
        if abs(n - round(n)) > 1e-9:
            raise ScenarioRangeError("horizon", "must be a multiple of step")
        if self.no_change_len >= self.control_len:
            raise ScenarioRangeError("no_change_len", "must be shorter than control_len")
        x_n = self.control_len - self.no_change_len
        if self.right_turn_ratio > 0 and not self.pocket:
            raise ScenarioRangeError("right_turn_ratio", "right turns require pocket=yes")
        if self.pocket:
            x_w = self.control_len - self.pocket_len
            if not x_w < x_n:
                raise ScenarioRangeError("pocket_len", "pocket must start upstream of the no-changing zone")
            if not 0 < self.x_s < x_w:
                raise ScenarioRangeError("x_s", "bus stop must lie upstream of the pocket entrance")
        elif not self.x_s < x_n:
            raise ScenarioRangeError("x_s", "bus stop must lie upstream of the no-changing zone")
        return self

    @property
    def corridor(self) -> Corridor:
        x_c = self.control_len
        return Corridor(
            x_c=x_c,
            x_n=x_c - self.no_change_len,
            x_w=x_c - self.pocket_len if self.pocket else None,
            x_s=self.x_s,
            control_len=self.control_len,
            pocket_len=self.pocket_len if self.pocket else None,
            stop_capacity=self.stop_capacity,
        )

    @property
    def signal(self) -> SignalPlan:
        return SignalPlan(t_c=self.t_c, t_r=self.t_r)

    def with_values(self, **changes: Any) -> "ScenarioConfig":
        """Validated copy with some fields replaced"""
        values = self.model_dump()
        values.update(changes)
        return build_config(values)


def build_config(values: Dict[str, Any]) -> ScenarioConfig:
    """
    Validate raw values into a ScenarioConfig
    Raises ScenarioRangeError naming the first offending key
    """
    try:
        return ScenarioConfig(**values)
    except ValidationError as exc:
        first = exc.errors()[0]
        cause = first.get("ctx", {}).get("error")
        if isinstance(cause, ScenarioRangeError):
            raise ScenarioRangeError(cause.key, cause.message) from None
        key = str(first["loc"][0]) if first.get("loc") else "config"
        raise ScenarioRangeError(key, first.get("msg", "invalid value")) from None
