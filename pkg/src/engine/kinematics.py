"""
Closed-form travel-time and Newell spacing calculus

All functions are pure; times are continuous seconds.
"""

import math
from dataclasses import dataclass
from typing import Optional

from config import (
    A_MAX, BUS_LENGTH, CAR_LENGTH, SPACING_AUTOMATED, SPACING_HUMAN,
    TAU_AUTOMATED, TAU_HUMAN, V_MAX,
)
from models.domain import VehicleClass


@dataclass(frozen=True)
class NewellParams:
    """Temporal (tau) and spatial (d, front to front) displacement of a follower"""
    tau: float
    d: float


def vehicle_length(vclass: VehicleClass) -> float:
    return BUS_LENGTH if vclass == VehicleClass.CAB else CAR_LENGTH


def standstill_spacing(vclass: VehicleClass) -> float:
    """d' of the follower: bumper gap kept at standstill"""
    return SPACING_HUMAN if vclass == VehicleClass.HDV else SPACING_AUTOMATED


def time_displacement(vclass: VehicleClass) -> float:
    return TAU_HUMAN if vclass == VehicleClass.HDV else TAU_AUTOMATED


def min_travel_time(dist: float, v0: float, vmax: float = V_MAX, amax: float = A_MAX) -> float:
    """
    Minimum time to cover dist starting at v0: full acceleration, then cruise at vmax

    Raises:
        ValueError: negative distance, v0 outside [0, vmax] or non-positive amax
    """
    if dist < 0:
        raise ValueError(f"distance must be non-negative, got {dist}")
    if v0 < 0 or v0 > vmax + 1e-12:
        raise ValueError(f"initial speed {v0} outside [0, {vmax}]")
    if amax <= 0:
        raise ValueError("amax must be positive")
    if dist == 0:
        return 0.0
    v0 = min(v0, vmax)
    t_acc = (vmax - v0) / amax
    s_acc = (vmax + v0) / 2.0 * t_acc
    if s_acc > dist:
        return (-v0 + math.sqrt(v0 * v0 + 2.0 * amax * dist)) / amax
    return (dist - s_acc) / vmax + t_acc


def speed_after(dist: float, v0: float, vmax: float = V_MAX, amax: float = A_MAX) -> float:
    """Speed reached after dist under the same accelerate-then-cruise profile"""
    return min(vmax, math.sqrt(v0 * v0 + 2.0 * amax * max(dist, 0.0)))


def newell_params(follower: VehicleClass, leader: VehicleClass) -> NewellParams:
    """tau by follower class; d = follower's standstill gap plus leader length"""
    return NewellParams(
        tau=time_displacement(follower),
        d=standstill_spacing(follower) + vehicle_length(leader),
    )


def min_headway(p: NewellParams, v: float) -> float:
    """Minimum time headway tau + d/v; undefined for a stopped vehicle"""
    if v <= 0:
        raise ValueError("min_headway requires v > 0; stopped vehicles go through the signal release path")
    return p.tau + p.d / v


def min_gap(p: NewellParams, v: float) -> float:
    """Minimum front-to-front spacing tau·v + d"""
    if v < 0:
        raise ValueError("speed must be non-negative")
    return p.tau * v + p.d


def cruise_speed_for_arrival(dist: float, v0: float, duration: float, amax: float = A_MAX,
                             vmax: float = V_MAX) -> Optional[float]:
    """
    Cruise speed of a change-speed-at-amax-then-cruise profile that covers dist in exactly duration

    Returns None when no such profile exists without stopping (the vehicle must wait).
    """
    if dist <= 0:
        return v0
    if duration <= 0:
        return None
    mean_speed = dist / duration
    if abs(mean_speed - v0) < 1e-12:
        return v0
    if mean_speed > v0:
        # accelerate then cruise: w² - 2aT·w + 2a(dist - T·v0) = 0, w = vc - v0
        disc = (amax * duration) ** 2 - 2.0 * amax * (dist - duration * v0)
        if disc < 0:
            return None
        vc = v0 + amax * duration - math.sqrt(disc)
        return vc if vc <= vmax + 1e-9 else None
    # decelerate then cruise: u² - 2aT·u + 2a(T·v0 - dist) = 0, u = v0 - vc
    disc = (amax * duration) ** 2 - 2.0 * amax * (duration * v0 - dist)
    if disc < 0:
        return None
    vc = v0 - (amax * duration - math.sqrt(disc))
    return vc if vc > 1e-6 else None


def safe_speed(gap: float, v: float, b: float = A_MAX) -> float:
    """
    Largest next-step speed (dt = 1 s) that still allows stopping within gap at deceleration b

    gap is measured from the current position; the step itself covers (v + v_next)/2.
    """
    disc = b * b - 4.0 * b * (v - 2.0 * gap)
    if disc <= 0:
        return 0.0
    return max(0.0, (-b + math.sqrt(disc)) / 2.0)


def stopping_distance(v: float, b: float = A_MAX) -> float:
    return v * v / (2.0 * b)
