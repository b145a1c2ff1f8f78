"""
Corridor microsimulator

1 s resolution. Each step:
  snapshot -> controller tick (DBPL) -> apply commands -> lane changes
  -> longitudinal update with stop-bar crossings -> spawn -> trajectory rows

Arrival streams are drawn from the seed before any strategy logic runs, so EBL and
DBPL runs with the same seed see the same vehicles, classes, movements and dwells.
"""

import copy
from collections import Counter, deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Deque, Dict, List, Optional, Tuple

import numpy as np

from config import (
    A_MAX, HDV_NOISE_CLIP, MIN_BUS_INTERVAL, MIN_DWELL, REACTION_TIME, SAFE_DISTANCE,
    SPACING_AUTOMATED, V_MAX,
)
from engine.controller import Action, ControllerState, DynamicRowController, RowCommand, apply_commands
from engine.kinematics import (
    min_travel_time, standstill_spacing, stopping_distance, time_displacement, vehicle_length,
)
from engine.optimizer import RowOptimizer
from engine.planner import ArrivalPlanner, IdmModel, crossing_fraction, follow_cap, stop_cap
from models.domain import (
    DwellRecord, Lane, Movement, Phase, ScenarioConfig, Strategy, VehicleClass, VehicleState,
)
from models.errors import InvariantViolation
from utils.logger import get_logger

logger = get_logger(__name__)

DT = 1.0
STOP_SETBACK = 0.5       # stop position upstream of a stop line
STOPPED_SPEED = 0.1
BERTH_TOLERANCE = 1.0
CLEARANCE_MARGIN_S = 0.5  # HDV go/stop: required slack before the end of green
LANES = (Lane.POCKET, Lane.BUS, Lane.GENERAL)


@dataclass(frozen=True)
class Arrival:
    t: float
    vehicle_id: int
    vclass: VehicleClass
    movement: Movement
    dwell: float = 0.0


def generate_arrivals(config: ScenarioConfig) -> List[Arrival]:
    """
    Car and bus arrival streams for one seed

    Cars: Poisson at Q_veh/3600 veh/s; every car draws its CAV and right-turn
    uniforms so the stream stays aligned across mpr and right_turn_ratio values.
    Buses: normal headways truncated at MIN_BUS_INTERVAL, dwell truncated at MIN_DWELL.
    Ids follow arrival order starting at 1.
    """
    car_seq, bus_seq = np.random.SeedSequence(config.seed).spawn(2)
    car_rng = np.random.default_rng(car_seq)
    bus_rng = np.random.default_rng(bus_seq)
    raw: List[Tuple[float, int, VehicleClass, Movement, float]] = []

    if config.Q_veh > 0:
        mean_gap = 3600.0 / config.Q_veh
        t = 0.0
        while True:
            t += float(car_rng.exponential(mean_gap))
            u_cav, u_rt = car_rng.random(2)
            if t >= config.duration:
                break
            vclass = VehicleClass.CAV if u_cav < config.mpr else VehicleClass.HDV
            movement = Movement.RIGHT_TURN if u_rt < config.right_turn_ratio else Movement.THROUGH
            raw.append((t, 0, vclass, movement, 0.0))

    t = 0.0
    while True:
        t += max(MIN_BUS_INTERVAL, float(bus_rng.normal(config.bus_interval, config.bus_interval_std)))
        dwell = max(MIN_DWELL, float(bus_rng.normal(config.dwell_mean, config.dwell_std)))
        if t >= config.duration:
            break
        raw.append((t, 1, VehicleClass.CAB, Movement.THROUGH, dwell))

    raw.sort(key=lambda item: (item[0], item[1]))
    return [Arrival(t, vid, vclass, movement, dwell) for vid, (t, _, vclass, movement, dwell) in enumerate(raw, 1)]


@dataclass
class Vehicle:
    """Mutable plant vehicle"""
    id: int
    vclass: VehicleClass
    movement: Movement
    lane: Lane
    x: float
    v: float
    length: float
    t_arrival: float
    t_entry: float
    dwell_s: float = 0.0
    dwell_left: Optional[float] = None
    stop_index: int = 0
    served: bool = False
    change_at: Optional[float] = None
    intended_predecessor: Optional[int] = None
    committed: bool = False
    planned_T: Optional[float] = None
    t_entrance: Optional[float] = None
    v_entrance: Optional[float] = None
    lanes: List[str] = field(default_factory=list)

    @property
    def rear(self) -> float:
        return self.x - self.length

    @property
    def is_bus(self) -> bool:
        return self.vclass == VehicleClass.CAB

    @property
    def is_through(self) -> bool:
        return self.movement == Movement.THROUGH

    def clone(self) -> "Vehicle":
        return replace(self, lanes=list(self.lanes))

    def to_state(self) -> VehicleState:
        dwell = DwellRecord(remaining_s=max(self.dwell_left, 0.0), stop_index=self.stop_index) \
            if self.dwell_left is not None else None
        return VehicleState(
            id=self.id, vclass=self.vclass, movement=self.movement, lane=self.lane,
            x=self.x, v=self.v, length=self.length, dwell=dwell,
            t_entrance=self.t_entrance, v_entrance=self.v_entrance,
        )


@dataclass(frozen=True)
class VehicleRecord:
    """One vehicle that left the corridor (stop bar or pocket exit)"""
    vehicle_id: int
    vclass: VehicleClass
    movement: Movement
    t_arrival: float
    t_entry: float
    t_exit: float
    lanes: str
    exit_lane: Lane

    @property
    def travel_time(self) -> float:
        return self.t_exit - self.t_arrival


@dataclass
class World:
    t: float = 0.0
    vehicles: Dict[int, Vehicle] = field(default_factory=dict)
    waiting: Dict[Lane, Deque[Arrival]] = field(
        default_factory=lambda: {Lane.GENERAL: deque(), Lane.BUS: deque()}
    )
    next_arrival: int = 0
    ghosts: Dict[Lane, VehicleState] = field(default_factory=dict)
    crossed: Dict[int, VehicleState] = field(default_factory=dict)

    def clone(self) -> "World":
        return World(
            t=self.t,
            vehicles={vid: v.clone() for vid, v in self.vehicles.items()},
            waiting={lane: deque(q) for lane, q in self.waiting.items()},
            next_arrival=self.next_arrival,
            ghosts=dict(self.ghosts),
            crossed=dict(self.crossed),
        )


@dataclass
class SimulationResult:
    config: ScenarioConfig
    records: List[VehicleRecord]
    trajectory: List[Tuple[float, int, str, str, str, float, float]]
    events: List[RowCommand]
    incidents: Dict[str, int]
    conservation: Dict[str, Dict[str, int]]
    grants: Dict[str, float]


class CorridorSimulator:
    """One approach, one seed, one strategy"""

    def __init__(
        self,
        config: ScenarioConfig,
        arrivals: Optional[List[Arrival]] = None,
        noise: bool = True,
        solver_dump: Optional[Path] = None,
    ):
        self.config = config
        self.corridor = config.corridor
        self.signal = config.signal
        self.arrivals = arrivals if arrivals is not None else generate_arrivals(config)
        self.world = World()
        self.idm = IdmModel()
        self.planner = ArrivalPlanner(self.signal)
        self.noise = noise and config.hdv_noise_std > 0
        self._noise_rngs: Dict[int, np.random.Generator] = {}
        self.spawning = True
        self.recording = True
        self.keep_crossings = False

        self.records: List[VehicleRecord] = []
        self.trajectory: List[Tuple[float, int, str, str, str, float, float]] = []
        self.events: List[RowCommand] = []
        self.incidents: Dict[str, int] = {"red_hold": 0, "hard_brake": 0}
        self.spawned: Counter = Counter()
        self.departed: Counter = Counter()

        self.log = logger.bind(seed=config.seed, strategy=config.strategy.value)
        self.controller: Optional[DynamicRowController] = None
        self.ctrl = ControllerState()
        if config.strategy == Strategy.DBPL:
            optimizer = RowOptimizer(
                self.corridor, self.signal, omega_p=config.omega_p, k_lc=config.k_lc, dump_path=solver_dump,
            )
            self.controller = DynamicRowController(
                optimizer, step=config.step, horizon=config.horizon,
                context={"seed": config.seed, "strategy": config.strategy.value},
            )

    # ----------------------------------------------------------------- views

    @property
    def t(self) -> float:
        return self.world.t

    def lane_members(self, lane: Lane) -> List[Vehicle]:
        """Vehicles in one lane, downstream first"""
        return sorted((v for v in self.world.vehicles.values() if v.lane == lane), key=lambda v: (-v.x, v.id))

    def snapshot(self) -> List[VehicleState]:
        """
        S(t): every vehicle in the corridor plus the last stop-bar crosser of each lane

        A forked look-ahead also keeps every vehicle that crossed since the fork, each with
        its own t_stop_bar, so objectives stay comparable across planning offsets.
        """
        world = self.world
        states = [world.vehicles[vid].to_state() for vid in sorted(world.vehicles)]
        states.extend(world.crossed[vid] for vid in sorted(world.crossed))
        states.extend(
            world.ghosts[lane] for lane in (Lane.GENERAL, Lane.BUS)
            if lane in world.ghosts and world.ghosts[lane].id not in world.crossed
        )
        return states

    # -------------------------------------------------------------- forecast

    def fork(self) -> "CorridorSimulator":
        """Noise-free, spawn-free, controller-free copy for look-ahead"""
        twin = copy.copy(self)
        twin.world = self.world.clone()
        twin.idm = IdmModel(self.idm.params)
        twin.noise = False
        twin.spawning = False
        twin.recording = False
        twin.keep_crossings = True
        twin.controller = None
        twin.records, twin.trajectory, twin.events = [], [], []
        twin.incidents = {key: 0 for key in self.incidents}
        twin.spawned, twin.departed = Counter(), Counter()
        return twin

    def forecast(self, n: int) -> List[List[VehicleState]]:
        """[S(t), S(t+dk), ..., S(t+n·dk)] from a forked rollout"""
        stride = max(1, int(round(self.config.step / DT)))
        twin = self.fork()
        snapshots = [self.snapshot()]
        for _ in range(n):
            for _ in range(stride):
                twin._advance()
            snapshots.append(twin.snapshot())
        return snapshots

    # ---------------------------------------------------------- lane changes

    def _neighbours(self, lane: Lane, x: float, exclude: int) -> Tuple[Optional[Vehicle], Optional[Vehicle]]:
        ahead: Optional[Vehicle] = None
        behind: Optional[Vehicle] = None
        for other in self.world.vehicles.values():
            if other.lane != lane or other.id == exclude:
                continue
            if other.x >= x:
                if ahead is None or other.x < ahead.x:
                    ahead = other
            elif behind is None or other.x > behind.x:
                behind = other
        return ahead, behind

    def lane_change_gate(self, veh: Vehicle, lane: Lane, margin: float) -> bool:
        """
        Live gate: bumper gaps of at least margin, and nobody needs to brake harder than a_max

        The new leader is priced at its worst next state, braking at a_max.
        """
        ahead, behind = self._neighbours(lane, veh.x, veh.id)
        if ahead is not None:
            if ahead.rear - veh.x < margin:
                return False
            x_next, v_next = self._braking_step(ahead)
            cap = follow_cap(veh.vclass, veh.x, veh.v, ahead.vclass, x_next, v_next, ahead.length)
            if cap < veh.v - A_MAX - 1e-9:
                return False
        if behind is not None:
            if veh.rear - behind.x < margin:
                return False
            x_next, v_next = self._braking_step(veh)
            cap = follow_cap(behind.vclass, behind.x, behind.v, veh.vclass, x_next, v_next, veh.length)
            if cap < behind.v - A_MAX - 1e-9:
                return False
        return True

    @staticmethod
    def _braking_step(veh: Vehicle) -> Tuple[float, float]:
        v_next = max(veh.v - A_MAX * DT, 0.0)
        return veh.x + 0.5 * (veh.v + v_next) * DT, v_next

    def _change_lane(self, veh: Vehicle, lane: Lane, t: float) -> None:
        veh.lane = lane
        veh.lanes.append(lane.value)
        veh.committed = False
        veh.planned_T = None
        if lane == Lane.POCKET and veh.t_entrance is None:
            veh.t_entrance = t
            veh.v_entrance = veh.v

    def _lane_changes(self, t: float) -> None:
        corridor = self.corridor
        for veh in self.lane_members(Lane.GENERAL):
            if veh.is_through:
                if veh.change_at is None or t < veh.change_at - 1e-9 or veh.x >= corridor.x_n:
                    continue
                if self.lane_change_gate(veh, Lane.BUS, SAFE_DISTANCE):
                    self._change_lane(veh, Lane.BUS, t)
                    self.events.append(RowCommand(t, veh.id, Action.EXECUTE, veh.change_at, "executed",
                                                  veh.intended_predecessor))
                    veh.change_at = None
                    veh.intended_predecessor = None
                    if self.controller is not None:
                        self.controller.stats.executed += 1
                continue
            if not corridor.has_pocket:
                continue
            if corridor.x_w - self.config.right_turn_window <= veh.x < corridor.x_w:
                if self.lane_change_gate(veh, Lane.BUS, SAFE_DISTANCE):
                    self._change_lane(veh, Lane.BUS, t)
            elif veh.x >= corridor.x_w:
                if self.lane_change_gate(veh, Lane.POCKET, standstill_spacing(veh.vclass)):
                    self._change_lane(veh, Lane.POCKET, t)

        if corridor.has_pocket:
            for veh in self.lane_members(Lane.BUS):
                if not veh.is_through and veh.x >= corridor.x_w:
                    if self.lane_change_gate(veh, Lane.POCKET, standstill_spacing(veh.vclass)):
                        self._change_lane(veh, Lane.POCKET, t)

    # ------------------------------------------------------- longitudinal

    def _noise(self, vid: int) -> float:
        rng = self._noise_rngs.get(vid)
        if rng is None:
            rng = np.random.default_rng([self.config.seed, vid])
            self._noise_rngs[vid] = rng
        return float(np.clip(rng.normal(0.0, self.config.hdv_noise_std), -HDV_NOISE_CLIP, HDV_NOISE_CLIP))

    def _plan_target(self, veh: Vehicle, t: float, chain: Tuple[Optional[float], Optional[VehicleClass]]) -> float:
        x_c, x_s = self.corridor.x_c, self.corridor.x_s
        leader_T, leader_class = chain
        if veh.is_bus and not veh.served:
            if veh.dwell_left is not None:
                hold = t + veh.dwell_left
                dist = x_c - veh.x
            else:
                hold = t + min_travel_time(max(x_s - veh.x, 0.0), min(veh.v, V_MAX)) + veh.dwell_s
                dist = x_c - x_s
            return self.planner.target(t, veh.vclass, dist, veh.v, leader_T, leader_class, hold_until=hold)
        return self.planner.target(t, veh.vclass, x_c - veh.x, veh.v, leader_T, leader_class)

    def _stop_line(self, veh: Vehicle, lane: Lane) -> Optional[float]:
        """Position the vehicle must not pass this step, None when unconstrained"""
        corridor = self.corridor
        if lane == Lane.POCKET:
            return None
        if not veh.is_through:
            if lane == Lane.BUS and veh.x < corridor.x_w:
                return None
            return corridor.x_n - STOP_SETBACK
        if veh.is_bus and not veh.served and veh.dwell_left is None:
            return corridor.x_s
        if veh.vclass == VehicleClass.HDV and not veh.committed:
            return corridor.x_c - STOP_SETBACK
        return None

    def _hdv_speed(self, veh: Vehicle, lane_leader: Optional[Tuple[float, float]], stop_line: Optional[float]) -> float:
        acc = self.idm.accel(veh.v, lane_leader[0] - veh.x if lane_leader else None, lane_leader[1] if lane_leader else 0.0)
        if stop_line is not None:
            acc = min(acc, self.idm.accel(veh.v, max(stop_line - veh.x, 1e-3), 0.0))
        if veh.v < STOPPED_SPEED and acc > 0:
            acc *= 1.0 - REACTION_TIME
        v_next = min(max(veh.v + acc * DT, 0.0), V_MAX)
        if self.noise and not veh.committed and v_next > 1.0:
            # speed noise never pushes the step past a_max either way
            v_next = v_next + self._noise(veh.id)
            v_next = min(max(v_next, veh.v - A_MAX * DT, 0.0), veh.v + A_MAX * DT, V_MAX)
        return v_next

    def _clears_in_green(self, veh: Vehicle, stop_line: float, t: float) -> bool:
        """A stop line out of reach at a_max is dropped when the bar is reached at the current speed in green"""
        if stop_cap(veh.x, veh.v, stop_line) >= veh.v - A_MAX * DT - 1e-9:
            return False
        if self.signal.phase_at(t) != Phase.GREEN or veh.v <= 0:
            return False
        return (self.corridor.x_c - veh.x) / veh.v < self.signal.green_remaining(t)

    def _move_lane(self, lane: Lane, t: float) -> None:
        corridor, signal = self.corridor, self.signal
        x_c = corridor.x_c
        members = self.lane_members(lane)
        old = {veh.id: (veh.rear, veh.v) for veh in members}

        ghost = self.world.ghosts.get(lane)
        chain: Tuple[Optional[float], Optional[VehicleClass]] = (
            (ghost.t_stop_bar, ghost.vclass) if ghost is not None else (None, None)
        )
        leader: Optional[Vehicle] = None
        leader_next: Tuple[float, float] = (0.0, 0.0)

        for veh in members:
            x, v = veh.x, veh.v
            lane_leader = old[leader.id] if leader is not None else None

            if veh.is_through and lane != Lane.POCKET:
                veh.planned_T = self._plan_target(veh, t, chain)
                chain = (veh.planned_T, veh.vclass)
                if veh.vclass == VehicleClass.HDV:
                    fits = (
                        signal.phase_at(t) == Phase.GREEN
                        and veh.planned_T < t + signal.green_remaining(t) - CLEARANCE_MARGIN_S
                    )
                    if fits:
                        veh.committed = True
                    elif veh.committed and stopping_distance(v) < x_c - STOP_SETBACK - x:
                        veh.committed = False

            stop_line = self._stop_line(veh, lane)
            if veh.vclass == VehicleClass.HDV and stop_line == x_c - STOP_SETBACK \
                    and self._clears_in_green(veh, stop_line, t):
                veh.committed = True
                stop_line = None
            if veh.dwell_left is not None:
                v_next = 0.0
            elif veh.vclass == VehicleClass.HDV:
                v_next = self._hdv_speed(veh, lane_leader, stop_line)
            elif veh.is_through and lane != Lane.POCKET and stop_line is None:
                v_next = self.planner.speed_command(t, x, v, x_c, veh.planned_T)
                if v_next is None:
                    v_next = min(v + A_MAX * DT, V_MAX)
                    if not self._clears_in_green(veh, x_c - STOP_SETBACK, t):
                        stop_line = x_c - STOP_SETBACK
            else:
                v_next = min(v + A_MAX * DT, V_MAX)

            if stop_line is not None:
                v_next = min(v_next, stop_cap(x, v, stop_line))
            if leader is not None:
                v_next = min(v_next, follow_cap(veh.vclass, x, v, leader.vclass, leader_next[0], leader_next[1], leader.length))
            v_next = max(v_next, 0.0)
            if v - v_next > A_MAX + 1e-6:
                self.incidents["hard_brake"] += 1

            x_next = x + 0.5 * (v + v_next) * DT

            if lane == Lane.BUS and corridor.x_w is not None and x < corridor.x_w <= x_next:
                frac = crossing_fraction(x, v, v_next, corridor.x_w)
                veh.t_entrance = t + frac * DT
                veh.v_entrance = v + (v_next - v) * frac

            if x < x_c <= x_next:
                t_cross = t + crossing_fraction(x, v, v_next, x_c) * DT
                if veh.is_through and lane != Lane.POCKET and signal.phase_at(t_cross) == Phase.RED:
                    self.incidents["red_hold"] += 1
                    self.log.warning(f"t={t:.0f}: vehicle {veh.id} held at the stop bar during red")
                    x_next, v_next = max(x, x_c - 1e-3), 0.0
                else:
                    veh.x, veh.v = x_next, v_next
                    self._depart(veh, lane, t_cross)
                    leader, leader_next = veh, (x_next, v_next)
                    continue

            veh.x, veh.v = x_next, v_next
            if veh.is_bus and not veh.served:
                self._update_dwell(veh)
            leader, leader_next = veh, (x_next, v_next)

    def _update_dwell(self, veh: Vehicle) -> None:
        """
        Count down a running dwell, or admit a stopped bus to a free berth

        Berth i has its front at x_s - i·(l_B + d_A) for i < stop_capacity. A bus that
        stops behind the last berth, or while every berth is taken, waits unserved.
        """
        x_s, capacity = self.corridor.x_s, self.corridor.stop_capacity
        if veh.dwell_left is not None:
            veh.dwell_left -= DT
            if veh.dwell_left <= 1e-9:
                veh.dwell_left = None
                veh.served = True
            return
        if veh.v >= STOPPED_SPEED:
            return
        pitch = vehicle_length(VehicleClass.CAB) + SPACING_AUTOMATED
        last_berth = x_s - (capacity - 1) * pitch
        # the discrete stop law may settle up to v/2 - v²/2b past the line
        if not last_berth - BERTH_TOLERANCE <= veh.x <= x_s + BERTH_TOLERANCE:
            return
        occupied = sum(1 for other in self.world.vehicles.values() if other.is_bus and other.dwell_left is not None)
        if occupied >= capacity:
            return
        veh.v = 0.0
        veh.dwell_left = veh.dwell_s
        veh.stop_index = min(capacity - 1, max(0, int(round((x_s - veh.x) / pitch))))

    def _depart(self, veh: Vehicle, lane: Lane, t_cross: float) -> None:
        self.records.append(VehicleRecord(
            vehicle_id=veh.id, vclass=veh.vclass, movement=veh.movement,
            t_arrival=veh.t_arrival, t_entry=veh.t_entry, t_exit=t_cross,
            lanes=">".join(veh.lanes), exit_lane=lane,
        ))
        self.departed[(veh.vclass.value, veh.movement.value)] += 1
        if lane == Lane.BUS and veh.vclass == VehicleClass.CAV and self.controller is not None:
            self.controller.stats.bus_lane_exits += 1
        if lane in (Lane.GENERAL, Lane.BUS):
            crossing = veh.to_state().model_copy(update={"t_stop_bar": t_cross})
            self.world.ghosts[lane] = crossing
            if self.keep_crossings:
                self.world.crossed[veh.id] = crossing
        del self.world.vehicles[veh.id]

    # ----------------------------------------------------------------- spawn

    def _spawn(self, t: float) -> None:
        world = self.world
        while world.next_arrival < len(self.arrivals) and self.arrivals[world.next_arrival].t <= t + 1e-9:
            arrival = self.arrivals[world.next_arrival]
            world.next_arrival += 1
            world.waiting[Lane.BUS if arrival.vclass == VehicleClass.CAB else Lane.GENERAL].append(arrival)
            self.spawned[(arrival.vclass.value, arrival.movement.value)] += 1

        for lane, queue in world.waiting.items():
            if not queue:
                continue
            arrival = queue[0]
            d_prime = standstill_spacing(arrival.vclass)
            members = self.lane_members(lane)
            last = members[-1] if members else None
            if last is None:
                v0 = V_MAX
            else:
                gap = last.rear
                if gap <= d_prime:
                    continue
                room = gap - d_prime
                v0 = min(V_MAX, room / time_displacement(arrival.vclass),
                         (2.0 * A_MAX * room + last.v * last.v) ** 0.5)
            queue.popleft()
            world.vehicles[arrival.vehicle_id] = Vehicle(
                id=arrival.vehicle_id, vclass=arrival.vclass, movement=arrival.movement, lane=lane,
                x=0.0, v=v0, length=vehicle_length(arrival.vclass), t_arrival=arrival.t, t_entry=t,
                dwell_s=arrival.dwell, lanes=[lane.value],
            )

    # ------------------------------------------------------------------ step

    def _check_overlap(self) -> None:
        for lane in LANES:
            members = self.lane_members(lane)
            for leader, follower in zip(members, members[1:]):
                if leader.rear - follower.x < -1e-6:
                    raise InvariantViolation(
                        f"t={self.t:.0f}: vehicle {follower.id} overlaps {leader.id} in the {lane.value} lane "
                        f"(gap {leader.rear - follower.x:.3f} m)"
                    )

    def _advance(self) -> None:
        t = self.world.t
        self._lane_changes(t)
        for lane in LANES:
            self._move_lane(lane, t)
        self.world.t = t + DT
        if self.spawning:
            self._spawn(self.world.t)
        self._check_overlap()
        if self.recording:
            for vid in sorted(self.world.vehicles):
                veh = self.world.vehicles[vid]
                self.trajectory.append(
                    (self.world.t, vid, veh.vclass.value, veh.movement.value, veh.lane.value, veh.x, veh.v)
                )

    def step(self) -> None:
        t = self.world.t
        if self.controller is not None:
            states = self.snapshot()
            self.ctrl, commands = self.controller.tick(self.ctrl, states, t, self.forecast)
            apply_commands(commands, self.world.vehicles)
            self.events.extend(commands)
        self._advance()

    def run(self) -> SimulationResult:
        config = self.config
        self.log.info(f"run start: mpr={config.mpr} Q_veh={config.Q_veh} duration={config.duration:.0f}s")
        while self.world.t < config.duration - 1e-9:
            self.step()

        conservation = self.conservation()
        # braking past a_max counts as an emergency
        emergencies = self.idm.emergencies + self.incidents["hard_brake"]
        incidents = dict(self.incidents, emergency=emergencies)
        if incidents["emergency"] or incidents["red_hold"]:
            self.log.warning(f"run finished with incidents: {incidents}")
        self.log.info(f"run end: {len(self.records)} vehicles departed, {len(self.world.vehicles)} in corridor")

        grants = self.controller.stats.summary() if self.controller is not None else {}
        return SimulationResult(
            config=config, records=list(self.records), trajectory=list(self.trajectory),
            events=list(self.events), incidents=incidents, conservation=conservation, grants=grants,
        )

    def conservation(self) -> Dict[str, Dict[str, int]]:
        """spawned == departed + in_corridor per class/movement"""
        present: Counter = Counter()
        for veh in self.world.vehicles.values():
            present[(veh.vclass.value, veh.movement.value)] += 1
        for queue in self.world.waiting.values():
            for arrival in queue:
                present[(arrival.vclass.value, arrival.movement.value)] += 1
        keys = sorted(set(self.spawned) | set(self.departed) | set(present))
        return {
            f"{cls}/{mov}": {
                "spawned": self.spawned[(cls, mov)],
                "departed": self.departed[(cls, mov)],
                "in_corridor": present[(cls, mov)],
            }
            for cls, mov in keys
        }
