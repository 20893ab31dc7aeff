"""Uncertainty-gated Q-ensemble driving policy with a lattice-planner fallback."""

__version__ = "0.1.0"

from .config import Config, ConfigError, load_config, save_config
from .evaluation import EvalReport, PolicyRunner, evaluate, sweep
from .gate import Decision, decide, drl_action
from .lattice import LatticePlanner
from .network import DivergenceError, EnsembleNet, init_ensemble
from .simulator import TJunctionSim, WorldState, observe
from .training import RunManifest, Trainer

__all__ = [
    "Config", "ConfigError", "load_config", "save_config",
    "EvalReport", "PolicyRunner", "evaluate", "sweep",
    "Decision", "decide", "drl_action",
    "LatticePlanner",
    "DivergenceError", "EnsembleNet", "init_ensemble",
    "TJunctionSim", "WorldState", "observe",
    "RunManifest", "Trainer",
    "__version__",
]
