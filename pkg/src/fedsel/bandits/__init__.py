from .confidence import ConfidenceDecayError, ConfidenceState, update_confidence
from .estimators import (
    CostEstimate,
    EstimatorConfig,
    FrozenBank,
    LinUCBBank,
    NeuralEstimator,
    NeuralPerClientBank,
    NeuralSharedBank,
    Observation,
    UcbScore,
    make_bank,
)
from .mlp import MlpParameters, init_mlp, mlp_forward, mlp_gradient, train_nn
from .regret import RegretTracker, jain_index, record_regret, select_top

__all__ = [
    "ConfidenceDecayError",
    "ConfidenceState",
    "CostEstimate",
    "EstimatorConfig",
    "FrozenBank",
    "LinUCBBank",
    "MlpParameters",
    "NeuralEstimator",
    "NeuralPerClientBank",
    "NeuralSharedBank",
    "Observation",
    "RegretTracker",
    "UcbScore",
    "init_mlp",
    "jain_index",
    "make_bank",
    "mlp_forward",
    "mlp_gradient",
    "record_regret",
    "select_top",
    "train_nn",
    "update_confidence",
]
