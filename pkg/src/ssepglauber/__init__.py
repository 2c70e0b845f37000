"""Exclusion process with Glauber reactions: simulation, exact evolution and limit oracles."""
from .errors import *  # noqa: F401,F403
from .model import LatticeConfig, LocalFunction, ModelParams
from .presets import run_preset
from .stats import EstimateRecord, estimate

__version__ = "0.1.0"
