"""
Passing-state estimator

Given a snapshot S(k), the signal plan and a candidate lane-change set, estimates every
vehicle's stop-bar departure time. The bus lane carries one virtual mirror per general-lane
CAV so a hypothetical change can be priced without committing it.

Chains run downstream first. A virtual row that does not fire inherits its predecessor's
value and is transparent to the vehicles behind it.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Sequence, Tuple

from config import A_MAX, ACCEL_LOSS, REACTION_TIME, V_MAX
from engine.kinematics import min_headway, min_travel_time, newell_params
from models.domain import Corridor, Lane, SignalPlan, VehicleClass, VehicleState
from models.errors import InvariantViolation

NEG_INF = float("-inf")


def mirror_id(vehicle_id: int) -> int:
    """Id of the bus-lane mirror of a general-lane CAV"""
    return -vehicle_id


@dataclass
class LanePartition:
    """Disjoint passed / between / upstream subsets of one lane, each ordered downstream first"""
    passed: List[VehicleState] = field(default_factory=list)
    between: List[VehicleState] = field(default_factory=list)
    upstream: List[VehicleState] = field(default_factory=list)

    def ids(self) -> Tuple[List[int], List[int], List[int]]:
        return ([s.id for s in self.passed], [s.id for s in self.between], [s.id for s in self.upstream])


@dataclass
class EstimateTable:
    """Estimated stop-bar departures (t_dep) plus pocket-entrance crossings for one step k"""
    k: float
    t_dep: Dict[int, float] = field(default_factory=dict)
    t_entrance: Dict[int, float] = field(default_factory=dict)
    v_entrance: Dict[int, float] = field(default_factory=dict)
    t_bl: float = NEG_INF
    t_gl: float = NEG_INF
    t_entrance_bl: float = NEG_INF
    v_entrance_bl: float = V_MAX


@dataclass(frozen=True)
class _Leader:
    t: float
    vclass: VehicleClass


def _downstream_first(states: Iterable[VehicleState]) -> List[VehicleState]:
    # real before virtual at equal position, then by id for determinism
    return sorted(states, key=lambda s: (-s.x, s.is_virtual, s.id))


class PassingStateEstimator:
    """Stop-bar departure estimates for both lanes and the pocket pathway"""

    def __init__(self, corridor: Corridor, signal: SignalPlan, vmax: float = V_MAX, amax: float = A_MAX):
        self.corridor = corridor
        self.signal = signal
        self.vmax = vmax
        self.amax = amax
        self.startup_loss = REACTION_TIME + ACCEL_LOSS
        self._headways: Dict[Tuple[VehicleClass, VehicleClass], float] = {}

    # ------------------------------------------------------------------ helpers

    def close_follow_headway(self, follower: VehicleClass, leader: VehicleClass) -> float:
        """Minimum headway evaluated at v_max"""
        key = (follower, leader)
        if key not in self._headways:
            self._headways[key] = min_headway(newell_params(follower, leader), self.vmax)
        return self._headways[key]

    def free_departure(self, state: VehicleState, k: float) -> float:
        """Unconstrained stop-bar time k + Z(x_c - x)"""
        return k + min_travel_time(max(self.corridor.x_c - state.x, 0.0), min(state.v, self.vmax), self.vmax, self.amax)

    def released_free_departure(self, state: VehicleState, k: float) -> float:
        """Lower bound on any estimate for a through vehicle: signal gating of its free departure"""
        extra = self.startup_loss if state.vclass == VehicleClass.HDV else 0.0
        return self.signal.release_time(self.free_departure(state, k), extra)

    def _stop_bar_time(self, state: VehicleState, t_p1: float, leader: _Leader) -> float:
        if leader.t == NEG_INF:
            t_p2 = t_p1
        else:
            t_p2 = max(t_p1, leader.t + self.close_follow_headway(state.vclass, leader.vclass))
        extra = self.startup_loss if state.vclass == VehicleClass.HDV else 0.0
        t_p3 = self.signal.release_time(t_p2, extra)
        if t_p3 <= leader.t:
            t_p3 = math.nextafter(leader.t, math.inf)
        return t_p3

    # ------------------------------------------------------------ virtual vehicles

    def sync_virtual(self, states: Sequence[VehicleState], granted: FrozenSet[int] = frozenset()) -> List[VehicleState]:
        """
        Give every general-lane CAV one bus-lane mirror at its own position

        A granted CAV's mirror becomes real and its general-lane slot becomes virtual.

        Raises:
            InvariantViolation: the input already carries a mirror for some CAV
            ValueError: a granted id is not a general-lane CAV
        """
        existing = [s.mirror_of for s in states if s.mirror_of is not None]
        if existing:
            raise InvariantViolation(f"snapshot already holds mirrors for vehicles {sorted(existing)}")

        candidates = {
            s.id for s in states
            if s.lane == Lane.GENERAL and s.is_cav and not s.is_virtual and s.x < self.corridor.x_c
        }
        stray = set(granted) - candidates
        if stray:
            raise ValueError(f"grants reference vehicles that are not general-lane CAVs: {sorted(stray)}")

        synced: List[VehicleState] = []
        for s in states:
            if s.id in candidates:
                changes = s.id in granted
                synced.append(s.model_copy(update={"is_virtual": True}) if changes else s)
                synced.append(s.model_copy(update={
                    "id": mirror_id(s.id),
                    "lane": Lane.BUS,
                    "is_virtual": not changes,
                    "mirror_of": s.id,
                }))
            else:
                synced.append(s)
        return synced

    # --------------------------------------------------------------- partitions

    def partition(self, states: Sequence[VehicleState], lane: Lane, k: float) -> LanePartition:
        """Split one lane at x_c and, for the bus lane with a pocket, at x_w"""
        x_c, x_w = self.corridor.x_c, self.corridor.x_w
        result = LanePartition()
        for s in _downstream_first(s for s in states if s.lane == lane):
            if s.x >= x_c:
                result.passed.append(s)
            elif lane == Lane.BUS and x_w is not None and s.x < x_w:
                result.upstream.append(s)
            else:
                result.between.append(s)
        result.passed.sort(key=lambda s: (-(s.t_stop_bar if s.t_stop_bar is not None else k), s.id))
        return result

    def _boundary(self, passed: Sequence[VehicleState]) -> _Leader:
        real = [s for s in passed if not s.is_virtual and s.t_stop_bar is not None]
        if not real:
            return _Leader(NEG_INF, VehicleClass.CAV)
        last = max(real, key=lambda s: (s.t_stop_bar, -s.id))
        return _Leader(last.t_stop_bar, last.vclass)

    def _passed_rows(self, passed: Sequence[VehicleState], boundary: _Leader) -> Dict[int, float]:
        rows: Dict[int, float] = {}
        prev = boundary.t
        # oldest crossing first so a virtual row inherits the vehicle ahead of it
        for s in reversed(passed):
            if s.is_virtual or s.t_stop_bar is None:
                rows[s.id] = prev
            else:
                rows[s.id] = s.t_stop_bar
                prev = s.t_stop_bar
        return rows

    # ---------------------------------------------------------------- bus lane

    def departure_busable(self, partition: LanePartition, k: float) -> Tuple[Dict[int, float], _Leader]:
        """
        Bus-lane rows for passed and between vehicles

        Returns the rows and the last real through leader, which the reorganized
        through chain upstream of the pocket entrance continues from.
        """
        leader = self._boundary(partition.passed)
        rows = self._passed_rows(partition.passed, leader)
        prev = leader.t
        for s in partition.between:
            if not s.is_through:
                continue
            if s.is_virtual:
                rows[s.id] = prev
                continue
            t = self._stop_bar_time(s, self.free_departure(s, k), leader)
            rows[s.id] = t
            prev = t
            leader = _Leader(t, s.vclass)
        return rows, leader

    def _entrance_boundary(self, states: Sequence[VehicleState]) -> Tuple[float, float, VehicleClass]:
        x_w = self.corridor.x_w
        crossed = [
            s for s in states
            if not s.is_virtual and s.t_entrance is not None and s.lane in (Lane.BUS, Lane.POCKET)
            and x_w is not None and s.x >= x_w
        ]
        if not crossed:
            return NEG_INF, self.vmax, VehicleClass.CAV
        last = max(crossed, key=lambda s: (s.t_entrance, -s.id))
        v = last.v_entrance if last.v_entrance is not None else self.vmax
        return last.t_entrance, v, last.vclass

    def pocket_crossing(self, upstream: Sequence[VehicleState], k: float,
                        boundary: Tuple[float, float, VehicleClass]) -> Dict[int, Tuple[float, float]]:
        """Pocket-entrance crossing time and speed for bus-lane vehicles upstream of x_w"""
        x_w = self.corridor.x_w
        t_pre, v_pre, cls_pre = boundary
        rows: Dict[int, Tuple[float, float]] = {}
        for s in upstream:
            if s.is_virtual:
                rows[s.id] = (t_pre, v_pre)
                continue
            v0 = min(s.v, self.vmax)
            t_p1 = k + min_travel_time(max(x_w - s.x, 0.0), v0, self.vmax, self.amax)
            if t_pre == NEG_INF:
                t_p2, v_p2 = t_p1, math.inf
            else:
                tau = self.close_follow_headway(s.vclass, cls_pre)
                t_p2 = max(t_p1, t_pre + tau)
                v_p2 = v_pre + self.amax * tau
                if t_p2 <= t_pre:
                    t_p2 = math.nextafter(t_pre, math.inf)
            v_p1 = v0 + self.amax * (t_p2 - k)
            v_dep = min(self.vmax, v_p1, v_p2)
            rows[s.id] = (t_p2, v_dep)
            t_pre, v_pre, cls_pre = t_p2, v_dep, s.vclass
        return rows

    def reorganize_through(self, upstream: Sequence[VehicleState], entrance: Dict[int, Tuple[float, float]],
                           leader: _Leader) -> Dict[int, float]:
        """Stop-bar rows for through vehicles behind the pocket entrance; right-turners drop out of the chain"""
        span = self.corridor.x_c - self.corridor.x_w
        rows: Dict[int, float] = {}
        prev = leader.t
        for s in upstream:
            if not s.is_through:
                continue
            if s.is_virtual:
                rows[s.id] = prev
                continue
            t_ent, v_ent = entrance[s.id]
            t_p1 = t_ent + min_travel_time(span, v_ent, self.vmax, self.amax)
            t = self._stop_bar_time(s, t_p1, leader)
            rows[s.id] = t
            prev = t
            leader = _Leader(t, s.vclass)
        return rows

    # ------------------------------------------------------------- general lane

    def departure_general(self, partition: LanePartition, k: float) -> Dict[int, float]:
        """General-lane rows; HDVs carry the start-up loss, vacated slots inherit their predecessor"""
        leader = self._boundary(partition.passed)
        rows = self._passed_rows(partition.passed, leader)
        prev = leader.t
        for s in partition.between:
            if s.is_virtual:
                rows[s.id] = prev
                continue
            if not s.is_through:
                # right-turners leave for the bus lane before x_n
                continue
            t = self._stop_bar_time(s, self.free_departure(s, k), leader)
            rows[s.id] = t
            prev = t
            leader = _Leader(t, s.vclass)
        return rows

    # ------------------------------------------------------------------ driver

    def estimate(self, states: Sequence[VehicleState], k: float, granted: FrozenSet[int] = frozenset()) -> EstimateTable:
        """Full estimate table for snapshot S(k) with the given CAVs changing lanes at k"""
        synced = self.sync_virtual(states, granted)
        general = self.partition(synced, Lane.GENERAL, k)
        bus = self.partition(synced, Lane.BUS, k)

        table = EstimateTable(k=k)
        table.t_gl = self._boundary(general.passed).t
        table.t_dep.update(self.departure_general(general, k))

        bus_rows, leader = self.departure_busable(bus, k)
        table.t_bl = self._boundary(bus.passed).t
        table.t_dep.update(bus_rows)

        if bus.upstream:
            boundary = self._entrance_boundary(synced)
            table.t_entrance_bl, table.v_entrance_bl = boundary[0], boundary[1]
            entrance = self.pocket_crossing(bus.upstream, k, boundary)
            for vid, (t_ent, v_ent) in entrance.items():
                table.t_entrance[vid] = t_ent
                table.v_entrance[vid] = v_ent
            table.t_dep.update(self.reorganize_through(bus.upstream, entrance, leader))
        return table


def weighted_cost(table: EstimateTable, car_ids: Iterable[int], bus_ids: Iterable[int],
                  granted: FrozenSet[int], omega_p: float) -> float:
    """
    Z = omega_p·T_b + (1 - omega_p)·T_c

    T_c averages cars over their active row: the general-lane row for staying cars,
    the mirror row for granted CAVs, the own row for cars already in the bus lane.
    Empty sets contribute 0.
    """
    car_ids = list(car_ids)
    bus_ids = list(bus_ids)

    car_total = 0.0
    for vid in car_ids:
        key = mirror_id(vid) if vid in granted else vid
        value = table.t_dep.get(key)
        if value is not None and value != NEG_INF:
            car_total += value
    bus_total = 0.0
    for vid in bus_ids:
        value = table.t_dep.get(vid)
        if value is not None and value != NEG_INF:
            bus_total += value

    t_c = car_total / len(car_ids) if car_ids else 0.0
    t_b = bus_total / len(bus_ids) if bus_ids else 0.0
    return omega_p * t_b + (1.0 - omega_p) * t_c

