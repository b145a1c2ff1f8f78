"""
ROW allocation optimizer

Pipeline per rolling-horizon tick:
1. define_extent   - restrict which vehicles the decision may touch (protects dwelling/approaching buses)
2. preallocate     - lane-change opportunity mask theta_i(k) and reduced step set K'
3. solve           - branch-and-bound over (k, grant set) with exact estimator evaluation

Big-M rows are never materialized: a candidate fixes lambda one-hot at its k, so the
estimator is evaluated only at that k, which gives the floor-of-cycle and
accelerate/cruise indicators exactly.
"""

import itertools
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import pandas as pd

from config import (
    CANDIDATE_CAP, CAR_LENGTH, COST_TOLERANCE, LANE_CHANGE_STEPS, OMEGA_P, SAFE_DISTANCE,
)
from engine.estimator import NEG_INF, PassingStateEstimator, mirror_id, weighted_cost
from engine.kinematics import min_travel_time
from models.domain import (
    Corridor, Grant, Lane, PlanningWindow, RowPlan, SignalPlan, VehicleClass, VehicleState,
)
from models.errors import CandidateLimitExceeded
from utils.logger import get_logger

logger = get_logger(__name__)

# t1 when no bus is dwelling
NO_DWELLING_BUS = math.inf


@dataclass(frozen=True)
class Extent:
    """Vehicles the decision may touch, fixed at k0"""
    J_gl: Tuple[int, ...]
    J_bl: Tuple[int, ...]
    t1: float
    x_r: float
    car_ids: Tuple[int, ...]      # through cars priced in T_c
    bus_ids: Tuple[int, ...]      # buses priced in T_b
    eligible: Tuple[int, ...]     # J_gl ∩ CAVs

    @property
    def is_degenerate(self) -> bool:
        return not self.eligible or not (self.car_ids or self.bus_ids)


@dataclass(frozen=True)
class Gap:
    """Bus-lane insertion space [follow, lead] between consecutive real vehicles"""
    follow: float
    lead: float
    follower_id: Optional[int]
    leader_id: Optional[int]

    @property
    def length(self) -> float:
        return self.lead - self.follow


@dataclass
class OpportunityMask:
    """theta_i(k) by step offset, the gap each opportunity targets, and the reduced step set"""
    theta: Dict[Tuple[int, int], int] = field(default_factory=dict)
    gap_of: Dict[Tuple[int, int], Gap] = field(default_factory=dict)
    offsets: List[int] = field(default_factory=list)     # K' as offsets into the window
    qualifying: Dict[int, Tuple[int, ...]] = field(default_factory=dict)

    def eligible_at(self, offset: int) -> Tuple[int, ...]:
        return self.qualifying.get(offset, ())


@dataclass(frozen=True)
class CandidateDecision:
    """lambda one-hot at offset, phi = 1 for every id in granted"""
    offset: int
    k: float
    granted: FrozenSet[int]

    def sort_key(self) -> Tuple[int, float, Tuple[int, ...]]:
        return (len(self.granted), self.k, tuple(sorted(self.granted)))


@dataclass
class SolveStats:
    candidates: int = 0
    nodes: int = 0
    pruned: int = 0
    seconds: float = 0.0


def _better(cost: float, decision: CandidateDecision, best_cost: float, best: Optional[CandidateDecision]) -> bool:
    if best is None or cost < best_cost - COST_TOLERANCE:
        return True
    if abs(cost - best_cost) <= COST_TOLERANCE:
        return decision.sort_key() < best.sort_key()
    return False


class RowOptimizer:
    """
    Right-of-way optimizer for one approach

    forecast arguments are sequences of snapshots indexed by step offset:
    forecast[0] is S(k0), forecast[i] is S(k0 + i·dk).
    """

    def __init__(
        self,
        corridor: Corridor,
        signal: SignalPlan,
        omega_p: float = OMEGA_P,
        k_lc: int = LANE_CHANGE_STEPS,
        candidate_cap: int = CANDIDATE_CAP,
        dump_path: Optional[Path] = None,
    ):
        self.corridor = corridor
        self.signal = signal
        self.omega_p = omega_p
        self.k_lc = k_lc
        self.candidate_cap = candidate_cap
        self.dump_path = dump_path
        self.estimator = PassingStateEstimator(corridor, signal)
        self.bus_headway = self.estimator.close_follow_headway(VehicleClass.CAB, VehicleClass.CAV)
        self.last_stats = SolveStats()

    # ---------------------------------------------------------------- extent

    def define_extent(self, states: Sequence[VehicleState], k0: float) -> Extent:
        x_c, x_s = self.corridor.x_c, self.corridor.x_s
        general = [s for s in states if s.lane == Lane.GENERAL and not s.is_virtual and s.x < x_c]
        bus_lane = [s for s in states if s.lane == Lane.BUS and not s.is_virtual and s.x < x_c]

        # Step 1: stop-bar side of the nearest right-turner
        right_turners = [s.x for s in general if not s.is_through]
        x_r = max(right_turners) if right_turners else 0.0
        J_gl = [s for s in general if s.x > x_r] if right_turners else list(general)
        J_bl = list(bus_lane)

        dwelling = [s for s in bus_lane if s.is_bus and s.dwell is not None]
        if dwelling:
            # Step 2
            t1 = min(k0 + min_travel_time(x_c - min(s.x, x_c), s.v) for s in dwelling)
            J_gl = [s for s in J_gl if x_s <= s.x <= x_c]
            J_bl = [s for s in J_bl if max(x_s, x_r) <= s.x <= x_c]
        else:
            # Step 3
            t1 = NO_DWELLING_BUS
            approaching = [s for s in bus_lane if s.is_bus and s.x <= x_s]
            if approaching:
                x_j = max(s.x for s in approaching)
                J_bl = [s for s in J_bl if x_j <= s.x <= x_c]
                J_gl = [s for s in J_gl if max(x_j, x_r) <= s.x <= x_c]

        # Step 4
        if t1 != NO_DWELLING_BUS:
            J_gl = [s for s in J_gl if not self.estimator.free_departure(s, k0) + self.bus_headway > t1]

        car_ids = tuple(s.id for s in J_gl if s.is_through) + tuple(
            s.id for s in J_bl if not s.is_bus and s.is_through
        )
        return Extent(
            J_gl=tuple(s.id for s in J_gl),
            J_bl=tuple(s.id for s in J_bl),
            t1=t1,
            x_r=x_r,
            car_ids=car_ids,
            bus_ids=tuple(s.id for s in J_bl if s.is_bus),
            eligible=tuple(s.id for s in J_gl if s.is_cav and s.is_through),
        )

    # ------------------------------------------------------------ preallocation

    def bus_lane_gaps(self, states: Sequence[VehicleState]) -> List[Gap]:
        """Qualifying spaces between consecutive real bus-lane vehicles, downstream first"""
        x_c = self.corridor.x_c
        real = sorted(
            (s for s in states if s.lane == Lane.BUS and not s.is_virtual and s.x < x_c),
            key=lambda s: (-s.x, s.id),
        )
        threshold = 2 * SAFE_DISTANCE + CAR_LENGTH
        if not real:
            return [Gap(0.0, x_c, None, None)]
        gaps: List[Gap] = []
        lead_bound, leader_id = x_c, None
        for s in real:
            if lead_bound - s.x > threshold:
                gaps.append(Gap(s.x, lead_bound, s.id, leader_id))
            lead_bound, leader_id = s.x - s.length, s.id
        if lead_bound > threshold:
            gaps.append(Gap(0.0, lead_bound, None, leader_id))
        return gaps

    def _lane_change_holds(self, vid: int, gap: Gap, later: Optional[Sequence[VehicleState]]) -> bool:
        """Post-change ordering at k + k_lc: follower < CAV < leader, bumper to bumper"""
        if later is None:
            return True
        by_id = {s.id: s for s in later}
        me = by_id.get(vid)
        if me is None or me.lane != Lane.GENERAL:
            return False
        follower = by_id.get(gap.follower_id) if gap.follower_id is not None else None
        leader = by_id.get(gap.leader_id) if gap.leader_id is not None else None
        if follower is not None and follower.lane == Lane.BUS and not follower.x < me.rear:
            return False
        if leader is not None and leader.lane == Lane.BUS and not me.x < leader.rear:
            return False
        return True

    def preallocate(self, extent: Extent, forecast: Sequence[Sequence[VehicleState]],
                    window: PlanningWindow) -> OpportunityMask:
        x_n = self.corridor.x_n
        mask = OpportunityMask()
        previous: Optional[Tuple[int, ...]] = None

        for offset, _k in enumerate(window.steps):
            states = forecast[offset]
            by_id = {s.id: s for s in states}
            gaps = self.bus_lane_gaps(states)
            later_index = offset + self.k_lc
            later = forecast[later_index] if self.k_lc and later_index < len(forecast) else None

            qualifying: List[int] = []
            for vid in extent.eligible:
                mask.theta[(vid, offset)] = 0
                s = by_id.get(vid)
                if s is None or s.lane != Lane.GENERAL or s.is_virtual:
                    continue
                if not s.x < x_n or not s.v > 0:
                    continue
                for gap in gaps:
                    if gap.follow + SAFE_DISTANCE + s.length < s.x < gap.lead - SAFE_DISTANCE:
                        if self._lane_change_holds(vid, gap, later):
                            mask.theta[(vid, offset)] = 1
                            mask.gap_of[(vid, offset)] = gap
                            qualifying.append(vid)
                        break

            current = tuple(sorted(qualifying))
            mask.qualifying[offset] = current
            if offset == 0 or current != previous:
                mask.offsets.append(offset)
            previous = current
        return mask

    # ------------------------------------------------------------- candidates

    def compatible(self, a: int, b: int, offset: int, mask: OpportunityMask,
                   states: Sequence[VehicleState]) -> bool:
        """Two grants may share a gap only with mutual safety spacing"""
        gap_a, gap_b = mask.gap_of[(a, offset)], mask.gap_of[(b, offset)]
        if gap_a != gap_b:
            return True
        need = CAR_LENGTH + SAFE_DISTANCE
        if gap_a.length < 2 * need:
            return False
        by_id = {s.id: s for s in states}
        return abs(by_id[a].x - by_id[b].x) >= need

    def _ordered_eligible(self, offset: int, mask: OpportunityMask,
                          states: Sequence[VehicleState]) -> List[int]:
        by_id = {s.id: s for s in states}
        return sorted(mask.eligible_at(offset), key=lambda vid: (-by_id[vid].x, vid))

    def enumerate_candidates(self, extent: Extent, mask: OpportunityMask,
                             forecast: Sequence[Sequence[VehicleState]],
                             window: PlanningWindow) -> List[CandidateDecision]:
        """
        Every compatible grant subset at every k in K', empty decision included,
        ordered by k, then size, then ids

        Raises:
            CandidateLimitExceeded: more candidates than the configured cap
        """
        steps = window.steps
        decisions: List[CandidateDecision] = []
        for offset in mask.offsets:
            states = forecast[offset]
            ids = sorted(mask.eligible_at(offset))
            for size in range(len(ids) + 1):
                for combo in itertools.combinations(ids, size):
                    if all(self.compatible(a, b, offset, mask, states) for a, b in itertools.combinations(combo, 2)):
                        decisions.append(CandidateDecision(offset, steps[offset], frozenset(combo)))
                        if len(decisions) > self.candidate_cap:
                            raise CandidateLimitExceeded(len(decisions), self.candidate_cap)
        return decisions

    # ----------------------------------------------------------------- solve

    def evaluate(self, decision: CandidateDecision, extent: Extent,
                 forecast: Sequence[Sequence[VehicleState]]) -> float:
        table = self.estimator.estimate(forecast[decision.offset], decision.k, decision.granted)
        return weighted_cost(table, extent.car_ids, extent.bus_ids, decision.granted, self.omega_p)

    def _lower_bound(self, states: Sequence[VehicleState], k: float, extent: Extent,
                     decided: FrozenSet[int], frontier_x: float, bounds: Dict[int, float]) -> float:
        """
        Exact rows for vehicles strictly downstream of the first undecided CAV,
        signal-gated free departures for the rest
        """
        table = self.estimator.estimate(states, k, decided)
        by_id = {s.id: s for s in states}

        def row(vid: int) -> float:
            s = by_id.get(vid)
            if s is None:
                return 0.0
            if s.x > frontier_x:
                key = mirror_id(vid) if vid in decided else vid
                value = table.t_dep.get(key, NEG_INF)
                return 0.0 if value == NEG_INF else value
            return bounds.get(vid, 0.0)

        t_c = sum(row(v) for v in extent.car_ids) / len(extent.car_ids) if extent.car_ids else 0.0
        t_b = sum(row(v) for v in extent.bus_ids) / len(extent.bus_ids) if extent.bus_ids else 0.0
        return self.omega_p * t_b + (1.0 - self.omega_p) * t_c

    def _bounds(self, states: Sequence[VehicleState], k: float, extent: Extent) -> Dict[int, float]:
        bounds: Dict[int, float] = {}
        wanted = set(extent.car_ids) | set(extent.bus_ids)
        for s in states:
            if s.id not in wanted or s.is_virtual:
                continue
            if s.x >= self.corridor.x_c and s.t_stop_bar is not None:
                bounds[s.id] = s.t_stop_bar
            else:
                bounds[s.id] = self.estimator.released_free_departure(s, k)
        return bounds

    def solve(self, forecast: Sequence[Sequence[VehicleState]], window: PlanningWindow,
              extent: Extent, mask: OpportunityMask) -> RowPlan:
        """Branch-and-bound argmin of Z over the candidate lattice; deterministic tie-break"""
        started = time.perf_counter()
        stats = SolveStats()
        steps = window.steps
        dump_rows: List[dict] = []

        best: Optional[CandidateDecision] = None
        best_cost = math.inf

        def consider(decision: CandidateDecision) -> None:
            nonlocal best, best_cost
            cost = self.evaluate(decision, extent, forecast)
            stats.candidates += 1
            if self.dump_path is not None:
                dump_rows.append({"k": decision.k, "grants": " ".join(map(str, sorted(decision.granted))), "Z": cost})
            if _better(cost, decision, best_cost, best):
                best, best_cost = decision, cost

        offsets = mask.offsets or [0]
        for offset in offsets:
            consider(CandidateDecision(offset, steps[offset], frozenset()))

        if not extent.is_degenerate:
            for offset in offsets:
                states = forecast[offset]
                k = steps[offset]
                order = self._ordered_eligible(offset, mask, states)
                if not order:
                    continue
                positions = {s.id: s.x for s in states}
                bounds = self._bounds(states, k, extent)

                def branch(index: int, included: FrozenSet[int]) -> None:
                    stats.nodes += 1
                    if index == len(order):
                        if included:
                            consider(CandidateDecision(offset, k, included))
                        return
                    lb = self._lower_bound(states, k, extent, included, positions[order[index]], bounds)
                    if lb > best_cost + COST_TOLERANCE:
                        stats.pruned += 1
                        return
                    vid = order[index]
                    if all(self.compatible(vid, other, offset, mask, states) for other in included):
                        branch(index + 1, included | {vid})
                    branch(index + 1, included)

                branch(0, frozenset())

        stats.seconds = time.perf_counter() - started
        self.last_stats = stats
        self._dump(dump_rows)

        plan = self.build_plan(best, best_cost, forecast)
        logger.debug(
            f"solve k0={window.k0:.0f}: {stats.candidates} evaluated, {stats.nodes} nodes, "
            f"{stats.pruned} pruned, grants={plan.granted_ids} Z={best_cost:.4f} ({stats.seconds * 1000:.1f} ms)"
        )
        return plan

    def solve_exhaustive(self, forecast: Sequence[Sequence[VehicleState]], window: PlanningWindow,
                         extent: Extent, mask: OpportunityMask) -> RowPlan:
        """Reference solver: evaluates every enumerated candidate with the same tie-break"""
        best: Optional[CandidateDecision] = None
        best_cost = math.inf
        for decision in self.enumerate_candidates(extent, mask, forecast, window):
            cost = self.evaluate(decision, extent, forecast)
            if _better(cost, decision, best_cost, best):
                best, best_cost = decision, cost
        return self.build_plan(best, best_cost, forecast)

    def build_plan(self, decision: Optional[CandidateDecision], cost: float,
                   forecast: Sequence[Sequence[VehicleState]]) -> RowPlan:
        """Attach post-change bus-lane predecessor and follower to every grant"""
        if decision is None:
            return RowPlan(k_c=0.0, grants=(), objective=0.0)
        if not decision.granted:
            return RowPlan(k_c=decision.k, grants=(), objective=cost)

        states = forecast[decision.offset]
        x_c = self.corridor.x_c
        lane = [
            (s.x, s.id) for s in states
            if s.lane == Lane.BUS and not s.is_virtual and s.x < x_c
        ] + [(s.x, s.id) for s in states if s.id in decision.granted]
        lane.sort(key=lambda item: (-item[0], item[1]))

        grants: List[Grant] = []
        for position, (_, vid) in enumerate(lane):
            if vid not in decision.granted:
                continue
            predecessor = lane[position - 1][1] if position > 0 else None
            follower = lane[position + 1][1] if position + 1 < len(lane) else None
            grants.append(Grant(vehicle_id=vid, predecessor=predecessor, follower=follower))
        grants.sort(key=lambda g: g.vehicle_id)
        return RowPlan(k_c=decision.k, grants=tuple(grants), objective=cost)

    def plan(self, forecast: Sequence[Sequence[VehicleState]], window: PlanningWindow) -> RowPlan:
        """define_extent -> preallocate -> solve"""
        extent = self.define_extent(forecast[0], window.k0)
        mask = self.preallocate(extent, forecast, window)
        return self.solve(forecast, window, extent, mask)

    def _dump(self, rows: List[dict]) -> None:
        if self.dump_path is None or not rows:
            return
        path = Path(self.dump_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        pd.DataFrame(rows, columns=["k", "grants", "Z"]).to_csv(
            path, mode="a", header=not path.exists(), index=False, float_format="%.6f"
        )
