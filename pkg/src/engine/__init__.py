"""DBPL engine - kinematics, estimator, optimizer, controller and corridor plant"""

from .controller import ControllerState, DynamicRowController, RowCommand
from .estimator import PassingStateEstimator, weighted_cost
from .optimizer import RowOptimizer
from .simulator import CorridorSimulator, generate_arrivals

__all__ = [
    "ControllerState",
    "CorridorSimulator",
    "DynamicRowController",
    "PassingStateEstimator",
    "RowCommand",
    "RowOptimizer",
    "generate_arrivals",
    "weighted_cost",
]
