"""Quantum-assisted genetic algorithm, classical baselines and benchmarking tools."""

from qaga.analysis import CostModel, RunRecord, StopCriterion, brute_force, cost_sweep
from qaga.generators import ChimeraSpec, DclParams, chimera, gen_ac3, gen_dcl, gen_ran1
from qaga.ising import IsingModel, SpinGraph, SpinState, energy, energy_delta, flip

__version__ = "0.1.0"

__all__ = [
    "ChimeraSpec", "CostModel", "DclParams", "IsingModel", "RunRecord", "SpinGraph", "SpinState",
    "StopCriterion", "brute_force", "chimera", "cost_sweep", "energy", "energy_delta", "flip",
    "gen_ac3", "gen_dcl", "gen_ran1",
]
