"""Named weight tensors and their canonical flat representation.

The flat form carries no shape data; the manifest travels separately so a
receiver can only rebuild tensors when it is given the manifest explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np


class WeightsStructureError(ValueError):
    """Manifest and tensor data disagree."""


@dataclass(frozen=True)
class TensorSpec:
    node_name: str
    shape: Tuple[int, ...]

    def __post_init__(self):
        shape = tuple(int(d) for d in self.shape)
        if not shape:
            raise WeightsStructureError(f"{self.node_name}: empty shape")
        if any(d < 1 for d in shape):
            raise WeightsStructureError(f"{self.node_name}: non-positive dim in {shape}")
        object.__setattr__(self, "shape", shape)

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    def to_dict(self) -> dict:
        return {"node_name": self.node_name, "shape": list(self.shape)}

    @classmethod
    def from_dict(cls, d: dict) -> "TensorSpec":
        return cls(str(d["node_name"]), tuple(d["shape"]))


def manifest_size(manifest: Iterable[TensorSpec]) -> int:
    return sum(spec.size for spec in manifest)


def _check_unique(manifest: Sequence[TensorSpec]) -> None:
    names = [s.node_name for s in manifest]
    if len(set(names)) != len(names):
        raise WeightsStructureError(f"duplicate node names in manifest: {names}")


@dataclass
class ModelWeights:
    """Ordered mapping of node name to float32 tensor.

    Insertion order of ``tensors`` is the canonical flattening order.
    """

    tensors: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.tensors = {
            name: np.ascontiguousarray(arr, dtype=np.float32) for name, arr in self.tensors.items()
        }

    @property
    def manifest(self) -> List[TensorSpec]:
        return [TensorSpec(name, arr.shape) for name, arr in self.tensors.items()]

    def copy(self) -> "ModelWeights":
        return ModelWeights({k: v.copy() for k, v in self.tensors.items()})

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ModelWeights):
            return NotImplemented
        if list(self.tensors) != list(other.tensors):
            return False
        return all(
            a.shape == b.shape and a.tobytes() == b.tobytes()
            for a, b in zip(self.tensors.values(), other.tensors.values())
        )


def flatten_weights(w: ModelWeights, manifest: Sequence[TensorSpec] | None = None) -> np.ndarray:
    """Concatenate tensors row-major in manifest order into one float32 vector."""
    if manifest is None:
        manifest = w.manifest
    _check_unique(manifest)
    if [s.node_name for s in manifest] != list(w.tensors):
        raise WeightsStructureError("manifest node names do not match tensors")
    parts = []
    for spec in manifest:
        arr = w.tensors[spec.node_name]
        if arr.shape != spec.shape:
            raise WeightsStructureError(
                f"{spec.node_name}: tensor shape {arr.shape} != manifest shape {spec.shape}"
            )
        parts.append(arr.reshape(-1))
    if not parts:
        return np.zeros(0, dtype=np.float32)
    return np.concatenate(parts).astype(np.float32, copy=False)


def describe_weights(w: ModelWeights) -> List[TensorSpec]:
    return list(w.manifest)


def load_flat_weights(flat: np.ndarray, manifest: Sequence[TensorSpec]) -> ModelWeights:
    """Inverse of :func:`flatten_weights` given the manifest."""
    flat = np.asarray(flat)
    if flat.ndim != 1:
        raise WeightsStructureError(f"flat weights must be 1-D, got shape {flat.shape}")
    _check_unique(manifest)
    expected = manifest_size(manifest)
    if flat.size != expected:
        raise WeightsStructureError(
            f"flat length mismatch: expected {expected} values, got {flat.size}"
        )
    flat = flat.astype(np.float32, copy=False)
    tensors = {}
    offset = 0
    for spec in manifest:
        tensors[spec.node_name] = flat[offset : offset + spec.size].reshape(spec.shape).copy()
        offset += spec.size
    return ModelWeights(tensors)
