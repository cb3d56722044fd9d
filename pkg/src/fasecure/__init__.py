"""Secrecy-rate beamforming and antenna positioning for fluid-antenna ISAC."""

from .scenario import (ApvState, ChannelSet, InfeasibleScenario, Scenario, ScenarioError,
                       build_channels, random_layout, steering_vector, uniform_layout)
from .metrics import evaluate, probing_power, secrecy_rates
from .driver import (SolverOptions, SolverReport, bsum_solve, fa_from_fpa, fa_multistart,
                     fpa_baseline)
from .config import ConfigError, load_config

__all__ = [
    "ApvState", "ChannelSet", "InfeasibleScenario", "Scenario", "ScenarioError",
    "build_channels", "random_layout", "steering_vector", "uniform_layout",
    "evaluate", "probing_power", "secrecy_rates",
    "SolverOptions", "SolverReport", "bsum_solve", "fa_from_fpa", "fa_multistart", "fpa_baseline",
    "ConfigError", "load_config",
]
