"""Bioenergetic tilapia growth simulation with tabular Q-learning feeding control."""
from .errors import AquaRLError, ConfigError, NonFinite, Starved
from .growth_model import EnvConditions, FishState, GrowthParams, Reference, ReferenceSettings
from .mdp import ActionSpace, FishEnv, Grid, RewardSpec, TabularMDP, TERMINAL
from .qlearn import QTable, TrainConfig, train
from .metrics import EvalReport
from .experiment import ExperimentConfig, SweepSpec

__version__ = "0.1.0"

__all__ = [
    "AquaRLError", "ConfigError", "NonFinite", "Starved",
    "EnvConditions", "FishState", "GrowthParams", "Reference", "ReferenceSettings",
    "ActionSpace", "FishEnv", "Grid", "RewardSpec", "TabularMDP", "TERMINAL",
    "QTable", "TrainConfig", "train", "EvalReport", "ExperimentConfig", "SweepSpec",
]
