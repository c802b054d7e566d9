from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .data import LocalDataset, make_client_dataset, make_global_test_set
from .surrogate import error_rate, evaluate, init_weights, train_local
from .weights import (
    ModelWeights,
    TensorSpec,
    WeightsStructureError,
    describe_weights,
    flatten_weights,
    load_flat_weights,
    manifest_size,
)

__all__ = [
    "CheckpointError",
    "LocalDataset",
    "ModelWeights",
    "TensorSpec",
    "WeightsStructureError",
    "describe_weights",
    "error_rate",
    "evaluate",
    "flatten_weights",
    "init_weights",
    "load_checkpoint",
    "load_flat_weights",
    "make_client_dataset",
    "make_global_test_set",
    "manifest_size",
    "save_checkpoint",
    "train_local",
]
