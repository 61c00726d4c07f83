"""Maximum queue length at a periodic traffic light.

The queue gains a car with probability ``p`` in each of ``ell`` red slots
and loses one with probability ``q = 1 - p`` in each of ``ell`` green
slots.  The package computes the stationary law of the queue observed once
per cycle, the hitting probabilities of the cycle walk, the Poisson
clumping prediction ``P{M_n <= m} ~ exp(-epsilon n (p/q)^(2m))`` and
checks all of it against closed forms, direct solves and simulation.
"""
from .clump import (
    ClumpSolution,
    HitProbabilities,
    MaxPrediction,
    conjecture_ratio,
    epsilon_pair,
    hit_oracle,
    predict_max_cdf,
    solve_clumps,
    solve_hit_probs,
)
from .gfsolver import SolverError, StationarySolution, StructuralError, solve_stationary
from .model import ModelError, ModelParams, Order, cycle_kernel, make_params, step_law
from .montecarlo import SimConfig, estimate_sojourn, estimate_stationary, simulate_walk

__version__ = "0.1.0"

__all__ = [
    "ClumpSolution",
    "HitProbabilities",
    "MaxPrediction",
    "ModelError",
    "ModelParams",
    "Order",
    "SimConfig",
    "SolverError",
    "StationarySolution",
    "StructuralError",
    "conjecture_ratio",
    "cycle_kernel",
    "epsilon_pair",
    "estimate_sojourn",
    "estimate_stationary",
    "hit_oracle",
    "make_params",
    "predict_max_cdf",
    "simulate_walk",
    "solve_clumps",
    "solve_hit_probs",
    "solve_stationary",
    "step_law",
]
