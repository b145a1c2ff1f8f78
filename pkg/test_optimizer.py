"""
ROW Optimizer Test Script
Extent definition, bus-lane gaps, opportunity preallocation, candidate enumeration
and branch-and-bound against exhaustive enumeration
"""

import os
import sys

import numpy as np
import pytest

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from engine.estimator import weighted_cost
from engine.kinematics import min_travel_time, vehicle_length
from engine.optimizer import CandidateDecision, Gap, RowOptimizer
from models.domain import Corridor, DwellRecord, Lane, Movement, PlanningWindow, SignalPlan, VehicleClass, VehicleState
from models.errors import CandidateLimitExceeded

HDV, CAV, CAB = VehicleClass.HDV, VehicleClass.CAV, VehicleClass.CAB
SIGNAL = SignalPlan(t_c=60, t_r=30)
CORRIDOR = Corridor(x_c=400, x_n=370, x_s=150, control_len=400)


def state(vid, x, v, vclass=CAV, lane=Lane.GENERAL, movement=Movement.THROUGH, **extra):
    return VehicleState(id=vid, vclass=vclass, movement=movement, lane=lane, x=x, v=v,
                        length=vehicle_length(vclass), **extra)


def static_forecast(states, window, k_lc=1):
    return [list(states)] * (len(window.steps) + k_lc)


def cruising_forecast(states, window, k_lc=1, x_c=400.0):
    """Constant-speed extrapolation; dwelling buses hold, vehicles past the stop bar keep their crossing time"""
    frames = []
    for i in range(len(window.steps) + k_lc):
        dt = i * window.dk
        frame = []
        for s in states:
            x = s.x if s.dwell is not None else s.x + s.v * dt
            if x < x_c:
                frame.append(s.model_copy(update={"x": round(x, 6)}))
            else:
                frame.append(s.model_copy(update={"x": round(x, 6), "t_stop_bar": window.k0 + (x_c - s.x) / s.v}))
        frames.append(frame)
    return frames


def queued_cav_snapshot():
    """Five stopped HDVs at the stop bar, one CAV approaching behind them, empty bus lane"""
    queue = [state(i + 1, 397 - 6.5 * i, 0, vclass=HDV) for i in range(5)]
    return queue + [state(6, 320, 5)]


@pytest.fixture
def optimizer():
    return RowOptimizer(CORRIDOR, SIGNAL, omega_p=0.9, k_lc=1)


def test_extent_without_buses(optimizer):
    """Test 1: no bus in the bus lane, every general-lane vehicle is in scope"""
    extent = optimizer.define_extent([state(1, 300, 10, vclass=HDV), state(2, 250, 10)], k0=0)
    assert extent.J_gl == (1, 2)
    assert extent.J_bl == ()
    assert extent.eligible == (2,)
    assert extent.t1 == float("inf")


def test_extent_with_dwelling_bus(optimizer):
    """Test 2: dwelling bus caps the extent at x_s and drops cars too slow to clear before it"""
    bus = state(10, 150, 0, vclass=CAB, lane=Lane.BUS, dwell=DwellRecord(remaining_s=20))
    states = [bus, state(1, 200, 0), state(2, 155, 0), state(3, 100, 8)]
    extent = optimizer.define_extent(states, k0=0)

    assert extent.t1 == pytest.approx(min_travel_time(250, 0))
    assert extent.J_gl == (1,)          # 2 too slow, 3 upstream of the stop
    assert extent.J_bl == (10,)
    assert extent.bus_ids == (10,)
    assert extent.eligible == (1,)


def test_extent_with_approaching_bus(optimizer):
    """Test 3: no dwelling bus, extent starts at the nearest bus upstream of the stop"""
    states = [state(10, 120, 10, vclass=CAB, lane=Lane.BUS), state(1, 200, 10), state(2, 110, 10)]
    extent = optimizer.define_extent(states, k0=0)
    assert extent.J_gl == (1,)
    assert extent.J_bl == (10,)


def test_extent_stops_at_right_turner(optimizer):
    """Test 4: only vehicles on the stop-bar side of the nearest right-turner are in scope"""
    states = [state(1, 300, 10), state(2, 200, 10, vclass=HDV, movement=Movement.RIGHT_TURN), state(3, 150, 10)]
    extent = optimizer.define_extent(states, k0=0)
    assert extent.x_r == 200
    assert extent.J_gl == (1,)
    assert extent.car_ids == (1,)


def test_bus_lane_gaps_threshold(optimizer):
    """Test 5: gaps must exceed 2·d_safe + l_v strictly; a 16 m gap does not qualify"""
    assert optimizer.bus_lane_gaps([]) == [Gap(0.0, 400.0, None, None)]

    bus = state(10, 300, 10, vclass=CAB, lane=Lane.BUS)
    car = state(11, 276, 10, lane=Lane.BUS)
    gaps = optimizer.bus_lane_gaps([bus, car])
    assert gaps == [Gap(300, 400, 10, None), Gap(0.0, 272, None, 11)]


def test_opportunity_mask(optimizer):
    """Test 6: moving CAV upstream of x_n qualifies; stopped or inside the no-changing zone does not"""
    window = PlanningWindow(k0=0, dk=1, h=2)
    states = [state(1, 100, 10), state(2, 380, 10), state(3, 200, 0), state(4, 300, 10, vclass=HDV)]
    forecast = static_forecast(states, window)
    extent = optimizer.define_extent(states, 0)
    mask = optimizer.preallocate(extent, forecast, window)

    assert mask.theta[(1, 0)] == 1
    assert mask.theta[(2, 0)] == 0
    assert mask.theta[(3, 0)] == 0
    assert mask.offsets == [0]          # identical qualifying sets collapse


def test_candidate_enumeration_and_compatibility(optimizer):
    """Test 7: far-apart CAVs combine; CAVs closer than l_v + d_safe cannot share a gap"""
    window = PlanningWindow(k0=0, dk=1, h=0)

    far = [state(1, 200, 10), state(2, 100, 10)]
    extent = optimizer.define_extent(far, 0)
    forecast = static_forecast(far, window)
    mask = optimizer.preallocate(extent, forecast, window)
    assert len(optimizer.enumerate_candidates(extent, mask, forecast, window)) == 4

    close = [state(1, 200, 10), state(2, 195, 10)]
    extent = optimizer.define_extent(close, 0)
    forecast = static_forecast(close, window)
    mask = optimizer.preallocate(extent, forecast, window)
    decisions = optimizer.enumerate_candidates(extent, mask, forecast, window)
    assert len(decisions) == 3
    assert frozenset({1, 2}) not in {d.granted for d in decisions}


def test_candidate_cap(optimizer):
    """Test 8: enumeration past the cap raises"""
    capped = RowOptimizer(CORRIDOR, SIGNAL, candidate_cap=2)
    window = PlanningWindow(k0=0, dk=1, h=0)
    states = [state(1, 200, 10), state(2, 100, 10)]
    extent = capped.define_extent(states, 0)
    forecast = static_forecast(states, window)
    mask = capped.preallocate(extent, forecast, window)
    with pytest.raises(CandidateLimitExceeded):
        capped.enumerate_candidates(extent, mask, forecast, window)


def test_queued_cav_is_granted(optimizer):
    """Test 9: a CAV stuck behind a red queue with a free bus lane gets the bus lane"""
    states = queued_cav_snapshot()
    window = PlanningWindow(k0=25, dk=1, h=3)
    plan = optimizer.plan(static_forecast(states, window), window)

    assert plan.granted_ids == [6]
    assert plan.k_c == 25
    assert plan.grants[0].predecessor is None

    extent = optimizer.define_extent(states, 25)
    empty = optimizer.estimator.estimate(states, 25)
    baseline = weighted_cost(empty, extent.car_ids, extent.bus_ids, frozenset(), 0.9)
    assert plan.objective < baseline


def test_no_cavs_gives_empty_plan(optimizer):
    """Test 10: MPR 0 never grants"""
    states = [state(1, 300, 10, vclass=HDV), state(2, 200, 10, vclass=HDV)]
    window = PlanningWindow(k0=0, dk=1, h=2)
    plan = optimizer.plan(static_forecast(states, window), window)
    assert plan.is_empty


def test_grant_records_bus_lane_neighbours(optimizer):
    """Test 11: predecessor and follower are the bus-lane vehicles around the CAV after the change"""
    states = [
        state(10, 390, 10, vclass=CAB, lane=Lane.BUS),
        state(1, 250, 10), state(2, 240, 10, vclass=HDV),
        state(11, 120, 5, vclass=CAB, lane=Lane.BUS),
    ]
    decision_window = PlanningWindow(k0=0, dk=1, h=0)
    forecast = static_forecast(states, decision_window)
    plan = optimizer.build_plan(CandidateDecision(0, 0, frozenset({1})), 1.0, forecast)
    assert plan.grants[0].predecessor == 10
    assert plan.grants[0].follower == 11


def random_instance(rng):
    """General lane of mixed cars, sparse bus lane, sometimes a dwelling bus"""
    states, vid = [], 1
    x = float(rng.uniform(320, 399))
    while x > 5 and vid <= 10:
        vclass = CAV if rng.random() < 0.5 else HDV
        states.append(state(vid, round(x, 3), round(float(rng.uniform(0.5, 14)), 3), vclass=vclass))
        vid += 1
        x -= vehicle_length(vclass) + float(rng.uniform(3, 45))

    if rng.random() < 0.3:
        states.append(state(50, 150, 0, vclass=CAB, lane=Lane.BUS,
                            dwell=DwellRecord(remaining_s=float(rng.uniform(1, 30)))))
        x = float(rng.uniform(200, 399))
        floor = 170
    else:
        x = float(rng.uniform(150, 399))
        floor = 10
    for bid in range(51, 54):
        if x < floor or rng.random() < 0.4:
            break
        states.append(state(bid, round(x, 3), round(float(rng.uniform(0, 14)), 3), vclass=CAB, lane=Lane.BUS))
        x -= 8 + float(rng.uniform(5, 120))
    return states


def test_branch_and_bound_matches_exhaustive():
    """Test 12: same argmin and objective as full enumeration on random instances"""
    rng = np.random.default_rng(99)
    optimizer = RowOptimizer(CORRIDOR, SIGNAL, omega_p=0.9, k_lc=1)
    for _ in range(200):
        k0 = float(rng.integers(0, 120))
        window = PlanningWindow(k0=k0, dk=1, h=3)
        states = random_instance(rng)
        forecast = cruising_forecast(states, window)
        extent = optimizer.define_extent(forecast[0], k0)
        mask = optimizer.preallocate(extent, forecast, window)

        fast = optimizer.solve(forecast, window, extent, mask)
        slow = optimizer.solve_exhaustive(forecast, window, extent, mask)
        assert fast.objective == pytest.approx(slow.objective, abs=1e-9)
        assert fast.granted_ids == slow.granted_ids
        assert fast.k_c == slow.k_c


def test_optimum_never_worse_than_no_grant():
    """Test 13: Z* is at most the empty-decision cost at k0"""
    rng = np.random.default_rng(5)
    optimizer = RowOptimizer(CORRIDOR, SIGNAL, omega_p=0.9, k_lc=1)
    for _ in range(100):
        k0 = float(rng.integers(0, 120))
        window = PlanningWindow(k0=k0, dk=1, h=2)
        states = random_instance(rng)
        forecast = cruising_forecast(states, window)
        extent = optimizer.define_extent(forecast[0], k0)
        plan = optimizer.plan(forecast, window)
        table = optimizer.estimator.estimate(forecast[0], k0)
        assert plan.objective <= weighted_cost(table, extent.car_ids, extent.bus_ids, frozenset(), 0.9) + 1e-9


def test_empty_decision_cost_is_offset_invariant(optimizer):
    """Test 14: with every vehicle cruising at v_max in green, the no-grant objective is the
    same at every planning offset, including offsets after some vehicles have crossed"""
    states = [state(1, 390, 14), state(2, 362, 14), state(3, 334, 14), state(4, 306, 14),
              state(10, 380, 14, vclass=CAB, lane=Lane.BUS)]
    window = PlanningWindow(k0=32, dk=1, h=5)
    forecast = cruising_forecast(states, window)
    extent = optimizer.define_extent(forecast[0], window.k0)
    assert extent.car_ids == (1, 2, 3, 4) and extent.bus_ids == (10,)

    costs = [optimizer.evaluate(CandidateDecision(i, k, frozenset()), extent, forecast)
             for i, k in enumerate(window.steps)]
    crossed = {s.id for s in forecast[-1] if s.x >= 400}
    assert {1, 10} <= crossed
    assert costs == pytest.approx([costs[0]] * len(costs), abs=1e-6)
