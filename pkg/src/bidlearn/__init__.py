"""Repeated auctions played by contextual mean-based learners on a discrete value grid."""
from ._accel import backend_name
from .analysis import reference_strategy
from .engine import SimulationConfig, TrajectoryLog, make_config, run_simulation, run_trials
from .grid import ConfigurationError, ValueDistribution, ValueGrid
from .learners import LearnerSpec
from .mechanisms import Mechanism, MechanismKind, run_auction

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError", "LearnerSpec", "Mechanism", "MechanismKind", "SimulationConfig",
    "TrajectoryLog", "ValueDistribution", "ValueGrid", "backend_name", "make_config",
    "reference_strategy", "run_auction", "run_simulation", "run_trials",
]
