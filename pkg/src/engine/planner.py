"""
Longitudinal control laws for the plant

- IdmModel: human drivers
- ArrivalPlanner: stop-bar arrival time targets and speed commands for CAVs and buses
- follow_cap / stop_cap: per-step speed caps that keep bumper gaps non-negative
"""

import math
from dataclasses import dataclass
from typing import Optional

from config import (
    A_MAX, ACCEL_LOSS, IDM_EXPONENT, REACTION_TIME, SIGNAL_MARGIN_S, SPACING_HUMAN, TAU_HUMAN, V_MAX,
)
from engine.kinematics import (
    cruise_speed_for_arrival, min_headway, min_travel_time, newell_params, safe_speed,
    standstill_spacing, stopping_distance,
)
from models.domain import SignalPlan, VehicleClass


@dataclass(frozen=True)
class IdmParams:
    v0: float = V_MAX
    T: float = TAU_HUMAN
    a: float = A_MAX
    b: float = A_MAX
    s0: float = SPACING_HUMAN
    delta: float = IDM_EXPONENT


class IdmModel:
    """Intelligent Driver Model with an emergency counter for non-positive gaps"""

    def __init__(self, params: IdmParams = IdmParams()):
        self.params = params
        self.emergencies = 0

    def accel(self, v: float, gap: Optional[float], leader_v: float = 0.0) -> float:
        """
        IDM acceleration clamped to [-a, a]; gap=None means free road

        A gap <= 0 returns -a and counts an emergency.
        """
        p = self.params
        free = 1.0 - (v / p.v0) ** p.delta
        if gap is None:
            return max(-p.a, min(p.a, p.a * free))
        if gap <= 0:
            self.emergencies += 1
            return -p.a
        s_star = p.s0 + max(0.0, v * p.T + v * (v - leader_v) / (2.0 * math.sqrt(p.a * p.b)))
        acc = p.a * (free - (s_star / gap) ** 2)
        return max(-p.a, min(p.a, acc))


def stop_cap(x: float, v: float, x_stop: float, b: float = A_MAX) -> float:
    """Largest next speed that still stops before x_stop"""
    return safe_speed(max(x_stop - x, 0.0), v, b)


def follow_cap(vclass: VehicleClass, x: float, v: float, leader_class: VehicleClass,
               leader_x: float, leader_v: float, leader_length: float, b: float = A_MAX) -> float:
    """
    Next-step speed cap behind a leader whose next-step state is (leader_x, leader_v)

    Every class keeps a Gipps-style stopping reserve; automated vehicles also close toward
    the Newell spacing tau·v + d, braking for it at no more than b. Never negative.
    """
    d_prime = standstill_spacing(vclass)
    reserve = leader_x - leader_length - d_prime - x + stopping_distance(leader_v, b)
    cap = safe_speed(max(reserve, 0.0), v, b)
    if vclass != VehicleClass.HDV:
        p = newell_params(vclass, leader_class)
        newell = (leader_x - p.d - x - v / 2.0) / (p.tau + 0.5)
        cap = min(cap, max(0.0, newell, v - b))
    # hard floor on the bumper gap
    cap = min(cap, max(0.0, 2.0 * (leader_x - leader_length - x) - v))
    return cap


def crossing_fraction(x: float, v: float, v_next: float, line: float) -> float:
    """Share of a 1 s step, linear speed change, at which the front bumper reaches line"""
    dist = line - x
    if dist <= 0:
        return 0.0
    a = v_next - v
    if abs(a) < 1e-12:
        return min(1.0, dist / v) if v > 0 else 1.0
    disc = v * v + 2.0 * a * dist
    if disc < 0:
        return 1.0
    s = (-v + math.sqrt(disc)) / a
    return min(max(s, 0.0), 1.0)


class ArrivalPlanner:
    """
    Stop-bar arrival targets for automated vehicles

    A lane is planned downstream first: each vehicle's target is its free arrival,
    pushed behind the leader's target by the close-follow headway, then released
    into green (plus a small margin). Human drivers get the same chain with the
    start-up loss instead of the margin, used only as leader information.
    """

    def __init__(self, signal: SignalPlan, vmax: float = V_MAX, amax: float = A_MAX):
        self.signal = signal
        self.vmax = vmax
        self.amax = amax
        self.startup_loss = REACTION_TIME + ACCEL_LOSS

    def headway(self, follower: VehicleClass, leader: VehicleClass) -> float:
        return min_headway(newell_params(follower, leader), self.vmax)

    def target(self, t: float, vclass: VehicleClass, dist: float, v: float,
               leader_T: Optional[float], leader_class: Optional[VehicleClass],
               hold_until: float = 0.0) -> float:
        """Planned stop-bar time; hold_until delays departure (bus dwell)"""
        start = max(t, hold_until)
        v0 = v if hold_until <= t else 0.0
        T = start + min_travel_time(max(dist, 0.0), min(v0, self.vmax), self.vmax, self.amax)
        if leader_T is not None and leader_class is not None:
            T = max(T, leader_T + self.headway(vclass, leader_class))
        extra = self.startup_loss if vclass == VehicleClass.HDV else SIGNAL_MARGIN_S
        return self.signal.release_time(T, extra)

    def speed_command(self, t: float, x: float, v: float, x_c: float, T: float) -> Optional[float]:
        """
        Next-step speed of the bang-cruise profile reaching x_c at T

        None when no profile avoids stopping; the caller then applies the stop law.
        """
        dist = x_c - x
        if T <= t + min_travel_time(max(dist, 0.0), min(v, self.vmax), self.vmax, self.amax) + 1e-6:
            return min(v + self.amax, self.vmax)
        vc = cruise_speed_for_arrival(dist, v, T - t, self.amax, self.vmax)
        if vc is None:
            return None
        if vc >= v:
            return min(v + self.amax, vc, self.vmax)
        return max(v - self.amax, vc)
