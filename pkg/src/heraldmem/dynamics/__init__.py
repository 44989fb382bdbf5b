"""Stochastic trajectory engine: write, storage, read-out and detection."""

from .detection import apply_detection_chain
from .memory import evolve_storage
from .readout import ReadoutEngine, simulate_readout
from .trials import (ClickDataset, ScenarioError, TrialParams, TrialRecord, assignments,
                     run_trials)
from .write import WriteAmplitudes, WriteSolver, simulate_write

__all__ = [
    "apply_detection_chain", "evolve_storage", "ReadoutEngine", "simulate_readout",
    "ClickDataset", "ScenarioError", "TrialParams", "TrialRecord", "assignments", "run_trials",
    "WriteAmplitudes", "WriteSolver", "simulate_write",
]
