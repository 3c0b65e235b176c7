"""Magnetorquer detumbling: control laws, a coupled orbit/attitude simulator
and Monte-Carlo tooling for comparing them."""

from .controllers import CONTROLLER_NAMES, FIELD_SCALING, ControllerConfig, DetumbleController, RateBiasFilter
from .dynamics import Env, Propagator, SimState, SpacecraftParams
from .geomag import FieldModel, GeoEpoch, load_igrf13
from .harness import CampaignConfig, EnvConfig, initial_state, run_episode, run_gain_sweep, run_monte_carlo, write_outputs

__version__ = "0.1.0"

__all__ = [
    "CONTROLLER_NAMES",
    "CampaignConfig",
    "ControllerConfig",
    "DetumbleController",
    "FIELD_SCALING",
    "Env",
    "EnvConfig",
    "FieldModel",
    "GeoEpoch",
    "Propagator",
    "RateBiasFilter",
    "SimState",
    "SpacecraftParams",
    "initial_state",
    "load_igrf13",
    "run_episode",
    "run_gain_sweep",
    "run_monte_carlo",
    "write_outputs",
]
