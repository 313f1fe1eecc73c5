"""Switched-system attitude control for a folding quadrotor."""
from .analysis import SwitchPlan, StabilityCertificate, certify_case1, certify_case2
from .config import ScenarioConfig, load, load_bundled
from .errors import MorphsimError
from .experiment import build_scenario, run_config
from .rigid_body import Configuration, SwitchingSignal, default_configurations
from .simulator import Scenario, SimLog, run
from .so3 import GainSet

__version__ = "0.1.0"

__all__ = [
    "SwitchPlan", "StabilityCertificate", "certify_case1", "certify_case2",
    "ScenarioConfig", "load", "load_bundled", "MorphsimError", "build_scenario",
    "run_config", "Configuration", "SwitchingSignal", "default_configurations",
    "Scenario", "SimLog", "run", "GainSet",
]
