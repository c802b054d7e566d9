from .config import EstimatorSettings, ExperimentConfig, load_config
from .coordinator import ClientReport, ClientResult, ClientWorker, RoundCoordinator, RoundReport
from .engine import ExperimentResult, SimulationState, run_experiment, run_round, run_seed
from .export import export_csv

__all__ = [
    "ClientReport",
    "ClientResult",
    "ClientWorker",
    "EstimatorSettings",
    "ExperimentConfig",
    "ExperimentResult",
    "RoundCoordinator",
    "RoundReport",
    "SimulationState",
    "export_csv",
    "load_config",
    "run_experiment",
    "run_round",
    "run_seed",
]
