"""Simulated watermark, defense and transferable-attack protocols with statistical verdicts."""
from .core import Budget, BudgetExceeded, ConfigError, ProtocolParams, rng_stream
from .experiments import run_experiment
from .gametheory import classify_trichotomy, solve_nash, sparsify
from .protocols import run_defense_game, run_transfattack_game, run_watermark_game

__version__ = "0.1.0"
