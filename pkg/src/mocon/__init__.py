"""Mechanical systems controlled by moving holonomic constraints.

Reduced Hamiltonian dynamics, orthogonal curvature of the control
foliation, graph reparametrization of impulsive controls, stabilizability
tests and vibrational controllers.
"""
from .catalog import CatalogEntry, build
from .controller import VibrationPlan, run_feedback, run_open_loop, synthesize_signal
from .dynamics import (ControlSignal, ForceModel, Potential, ReducedState, Trajectory,
                       constraint_reaction, integrate, reduced_hamiltonian, rhs)
from .errors import MoconError
from .geometry import (classify_fitness, curvature_from_geodesics, curvature_tensor,
                       geodesic_ivp, leaf_return_displacement)
from .metric import MetricModel, ReducedBlocks, reduced_blocks
from .reparam import (GraphControl, QuadraticControlSystem, fdiamond_support, lift_mechanical,
                      round_trip, simulate_graph, warp_from_signal)
from .stability import (LyapunovCandidate, StabilityReport, VibrationTuple, effective_minimum_test,
                        effective_potential, kalman_rank, lyapunov_condition_iv_prime,
                        mechanical_rank_test, selection_linearization)

__version__ = "0.1.0"

__all__ = [
    "CatalogEntry", "ControlSignal", "ForceModel", "GraphControl", "LyapunovCandidate",
    "MetricModel", "MoconError", "Potential", "QuadraticControlSystem", "ReducedBlocks",
    "ReducedState", "StabilityReport", "Trajectory", "VibrationPlan", "VibrationTuple",
    "build", "classify_fitness", "constraint_reaction", "curvature_from_geodesics",
    "curvature_tensor", "effective_minimum_test", "effective_potential", "fdiamond_support",
    "geodesic_ivp", "integrate", "kalman_rank", "leaf_return_displacement", "lift_mechanical",
    "lyapunov_condition_iv_prime", "mechanical_rank_test", "reduced_blocks", "reduced_hamiltonian",
    "rhs", "round_trip", "run_feedback", "run_open_loop", "selection_linearization",
    "simulate_graph", "synthesize_signal", "warp_from_signal",
]
