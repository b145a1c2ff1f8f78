"""
Dynamic adaptive ROW allocation protocol

Each second the controller either re-optimizes (no outstanding grants), validates
outstanding grants once their change time has passed, or holds.
"""

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Dict, FrozenSet, List, MutableMapping, Optional, Sequence, Tuple

from config import HORIZON_S, SAFE_DISTANCE, STEP_S
from engine.optimizer import RowOptimizer, SolveStats
from models.domain import Corridor, Grant, Lane, PlanningWindow, RowPlan, VehicleState
from utils.logger import get_logger

logger = get_logger(__name__)

# forecast_fn(n) -> [S(k0), S(k0+dk), ..., S(k0+n·dk)]
ForecastFn = Callable[[int], List[List[VehicleState]]]


class Action(str, Enum):
    RECOMMEND = "recommend"
    CANCEL = "cancel"
    EXECUTE = "execute"


@dataclass(frozen=True)
class RowCommand:
    """One event-log line; EXECUTE is emitted by the plant, never by tick"""
    t: float
    vehicle_id: int
    action: Action
    k_c: float
    reason: str = ""
    predecessor: Optional[int] = None


@dataclass(frozen=True)
class ControllerState:
    """Outstanding plan; J_c empty exactly when pending is None"""
    pending: Optional[RowPlan] = None
    J_c: FrozenSet[int] = frozenset()
    k_c: Optional[float] = None

    @property
    def idle(self) -> bool:
        return not self.J_c


@dataclass
class GrantStats:
    recommended: int = 0
    executed: int = 0
    cancelled: int = 0
    solves: int = 0
    bus_lane_exits: int = 0      # CAVs that left the corridor from the bus lane
    solve_stats: List[SolveStats] = field(default_factory=list)

    def summary(self) -> Dict[str, float]:
        evaluated = [s.candidates for s in self.solve_stats]
        seconds = [s.seconds for s in self.solve_stats]
        return {
            "recommended": self.recommended,
            "executed": self.executed,
            "cancelled": self.cancelled,
            "cav_bus_lane_exits": self.bus_lane_exits,
            "solves": self.solves,
            "candidates_mean": sum(evaluated) / len(evaluated) if evaluated else 0.0,
            "candidates_max": max(evaluated) if evaluated else 0,
            "nodes_pruned": sum(s.pruned for s in self.solve_stats),
            "solve_ms_mean": 1000.0 * sum(seconds) / len(seconds) if seconds else 0.0,
        }


def _bus_lane_neighbours(states: Sequence[VehicleState], x: float,
                         x_c: float) -> Tuple[Optional[VehicleState], Optional[VehicleState]]:
    """Nearest real bus-lane vehicle ahead of x and at-or-behind x"""
    ahead: Optional[VehicleState] = None
    behind: Optional[VehicleState] = None
    for s in states:
        if s.lane != Lane.BUS or s.is_virtual or s.x >= x_c:
            continue
        if s.x > x:
            if ahead is None or s.x < ahead.x:
                ahead = s
        elif behind is None or s.x > behind.x:
            behind = s
    return ahead, behind


class DynamicRowController:
    """
    Rolling-horizon wrapper around RowOptimizer

    tick is a function of (ctrl, states, k0) plus the forecast it requests;
    only the stats counters are mutated on the instance.
    """

    def __init__(self, optimizer: RowOptimizer, step: float = STEP_S, horizon: float = HORIZON_S,
                 context: Optional[Dict[str, object]] = None):
        self.optimizer = optimizer
        self.log = logger.bind(**(context or {}))
        self.corridor: Corridor = optimizer.corridor
        self.step = step
        self.horizon = horizon
        self.stats = GrantStats()

    def _optimize(self, states: Sequence[VehicleState], k0: float,
                  forecast_fn: ForecastFn) -> Optional[RowPlan]:
        extent = self.optimizer.define_extent(states, k0)
        if extent.is_degenerate:
            return None
        window = PlanningWindow(k0=k0, dk=self.step, h=self.horizon)
        forecast = forecast_fn(len(window.steps) - 1 + self.optimizer.k_lc)
        mask = self.optimizer.preallocate(extent, forecast, window)
        plan = self.optimizer.solve(forecast, window, extent, mask)
        self.stats.solves += 1
        self.stats.solve_stats.append(self.optimizer.last_stats)
        return plan

    def _validate(self, grant: Grant, by_id: Dict[int, VehicleState],
                  states: Sequence[VehicleState]) -> Tuple[str, str]:
        """('keep'|'done'|'cancel', reason)"""
        x_c = self.corridor.x_c
        me = by_id.get(grant.vehicle_id)
        if me is None or me.lane == Lane.DEPARTED or me.x >= x_c:
            return "done", "departed"
        if me.lane in (Lane.BUS, Lane.POCKET):
            return "done", "changed"
        if me.x >= self.corridor.x_n:
            return "cancel", "no-changing zone"

        ahead, behind = _bus_lane_neighbours(states, me.x, x_c)
        d_p = ahead.rear - me.x - SAFE_DISTANCE if ahead is not None else float("inf")
        d_f = me.rear - behind.x - SAFE_DISTANCE if behind is not None else float("inf")
        if d_p < 0:
            return "cancel", f"leader gap {d_p:.2f}"
        if d_f < 0:
            return "cancel", f"follower gap {d_f:.2f}"

        intended = grant.predecessor
        actual = ahead.id if ahead is not None else None
        if actual != intended:
            target = by_id.get(intended) if intended is not None else None
            gone = target is None or target.x >= x_c or target.lane in (Lane.POCKET, Lane.DEPARTED)
            if not (gone and actual is None):
                return "cancel", f"predecessor {actual} != {intended}"
        return "keep", ""

    def tick(self, ctrl: ControllerState, states: Sequence[VehicleState], k0: float,
             forecast_fn: ForecastFn) -> Tuple[ControllerState, List[RowCommand]]:
        if ctrl.idle:
            plan = self._optimize(states, k0, forecast_fn)
            if plan is None or plan.is_empty:
                return ControllerState(), []
            commands = [
                RowCommand(k0, g.vehicle_id, Action.RECOMMEND, plan.k_c, "granted", g.predecessor)
                for g in plan.grants
            ]
            self.stats.recommended += len(commands)
            self.log.info(f"t={k0:.0f}: ROW granted to {plan.granted_ids} at k_c={plan.k_c:.0f} (Z={plan.objective:.3f})")
            return ControllerState(pending=plan, J_c=frozenset(plan.granted_ids), k_c=plan.k_c), commands

        if ctrl.k_c is None or k0 <= ctrl.k_c:
            return ctrl, []

        by_id = {s.id: s for s in states}
        remaining = set(ctrl.J_c)
        for grant in ctrl.pending.grants:
            if grant.vehicle_id not in remaining:
                continue
            verdict, reason = self._validate(grant, by_id, states)
            if verdict == "done":
                remaining.discard(grant.vehicle_id)
            elif verdict == "cancel":
                commands = [
                    RowCommand(k0, vid, Action.CANCEL, ctrl.k_c, reason)
                    for vid in sorted(remaining)
                ]
                self.stats.cancelled += len(commands)
                self.log.info(f"t={k0:.0f}: cancelled grants {sorted(remaining)} ({reason})")
                return ControllerState(), commands

        if not remaining:
            return ControllerState(), []
        return replace(ctrl, J_c=frozenset(remaining)), []


def apply_commands(commands: Sequence[RowCommand], vehicles: MutableMapping[int, object]) -> None:
    """
    Mark or unmark plant vehicles for a lane change at k_c

    vehicles maps id -> plant vehicle carrying `change_at` and `intended_predecessor`.
    """
    for command in commands:
        vehicle = vehicles.get(command.vehicle_id)
        if vehicle is None:
            logger.warning(f"{command.action.value} for vehicle {command.vehicle_id} ignored: vehicle has departed")
            continue
        if command.action == Action.RECOMMEND:
            vehicle.change_at = command.k_c
            vehicle.intended_predecessor = command.predecessor
        elif command.action == Action.CANCEL:
            vehicle.change_at = None
            vehicle.intended_predecessor = None
