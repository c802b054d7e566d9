"""Cost estimators with UCB exploration.

Three banks share one interface (``estimate``, ``score``, ``observe``):

* :class:`LinUCBBank` -- one ridge regression over all clients.
* :class:`NeuralSharedBank` -- one neural estimator over all clients.
* :class:`NeuralPerClientBank` -- a personalised neural estimator per client.

:class:`FrozenBank` replays fixed estimates and never learns.

Networks work in normalised units (seconds / ``time_scale``, percent /
``drop_scale``); estimates and scores are reported in physical units, with
the exploration bonus multiplied by ``time_scale`` so both terms of the
score are in seconds.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..devices import CONTEXT_FIELDS, ContextVector
from ..model.checkpoint import atomic_write, decode_container, encode_container
from ..model.data import stable_seed
from ..model.weights import TensorSpec
from .confidence import ConfidenceDecayError, ConfidenceState
from .mlp import MlpParameters, init_mlp, mlp_forward, mlp_gradient, train_nn

logger = logging.getLogger(__name__)

PERSONAL_FEATURES = ("AR", "AC", "BS", "CI")
OUTPUT_FLOOR = 1e-3


@dataclass(frozen=True)
class CostEstimate:
    batch_time_hat: float
    battery_drop_hat: float

    @classmethod
    def clamped(cls, batch_time: float, drop: float) -> "CostEstimate":
        return cls(max(float(batch_time), OUTPUT_FLOOR), max(float(drop), OUTPUT_FLOOR))


@dataclass(frozen=True)
class UcbScore:
    exploitation: float
    bonus: float

    @property
    def value(self) -> float:
        return self.exploitation + self.bonus


@dataclass
class Observation:
    context: ContextVector
    batch_time: float
    battery_drop: float
    t: int


@dataclass
class EstimatorConfig:
    hidden: Tuple[int, ...] = (32, 16)
    lam: float = 1.0
    alpha: Optional[float] = None  # None -> per-kind default
    lr: float = 1e-2
    steps: int = 100
    time_scale: float = 300.0
    drop_scale: float = 1.0
    seed: int = 0


DEFAULT_ALPHA = {"linucb": 10.0, "neuralucb_s": 0.01, "neuralucb_m": 0.01}


def design_row(c: ContextVector, features: Sequence[str]) -> np.ndarray:
    """Scaled features plus a constant 1, which stands in for a first-layer bias."""
    return np.append(c.features(features), 1.0)


class NeuralEstimator:
    """One reward network, its confidence matrix and observation log."""

    def __init__(self, features: Sequence[str], cfg: EstimatorConfig, alpha: float, seed_tag: str = ""):
        self.features = tuple(features)
        self.cfg = cfg
        self.alpha = float(alpha)
        rng = np.random.default_rng(stable_seed("mlp", cfg.seed, seed_tag))
        self.params = init_mlp(len(self.features) + 1, cfg.hidden, 2, rng)
        self.confidence = ConfidenceState(self.params.p, cfg.lam)
        self.log: List[Observation] = []
        self.last_fit_loss: Optional[float] = None

    @property
    def m(self) -> int:
        return self.params.m

    def _x(self, c: ContextVector) -> np.ndarray:
        return design_row(c, self.features)

    def _scales(self) -> np.ndarray:
        return np.array([self.cfg.time_scale, self.cfg.drop_scale])

    def estimate(self, c: ContextVector) -> CostEstimate:
        out = mlp_forward(self.params, self._x(c)) * self._scales()
        return CostEstimate.clamped(out[0], out[1])

    def bonus(self, c: ContextVector) -> float:
        g = mlp_gradient(self.params, self._x(c), 0)
        try:
            q = self.confidence.quadratic(g)
        except ConfidenceDecayError:
            logger.warning("confidence matrix decayed; re-initialising")
            self.confidence.reset()
            raise
        return self.alpha * self.cfg.time_scale * np.sqrt(q / self.m)

    def score(self, c: ContextVector) -> UcbScore:
        est = self.estimate(c)
        bonus = self.bonus(c) if self.alpha else 0.0
        return UcbScore(-est.batch_time_hat, bonus)

    def record(self, obs: Observation) -> None:
        """Confidence update at the pre-fit parameters, then append to the log."""
        if self.log and obs.t < self.log[-1].t:
            raise ValueError("observations must arrive in time order")
        g = mlp_gradient(self.params, self._x(obs.context), 0)
        self.confidence.update(g, self.m)
        self.log.append(obs)

    def fit(self) -> List[float]:
        if not self.log:
            return []
        X = np.stack([self._x(o.context) for o in self.log])
        Y = np.array([[o.batch_time, o.battery_drop] for o in self.log]) / self._scales()
        self.params, history = train_nn(self.params, X, Y, self.cfg.steps, self.cfg.lr)
        self.last_fit_loss = history[-1] if history else None
        return history

    def observe(self, obs: Observation) -> None:
        self.record(obs)
        self.fit()

    def residuals(self) -> np.ndarray:
        """Normalised (time, drop) residuals of the current fit over the log, shape (n, 2)."""
        if not self.log:
            return np.zeros((0, 2))
        X = np.stack([self._x(o.context) for o in self.log])
        Y = np.array([[o.batch_time, o.battery_drop] for o in self.log]) / self._scales()
        return mlp_forward(self.params, X) - Y

    # -- snapshot --------------------------------------------------------

    def to_bytes(self) -> bytes:
        manifest = [TensorSpec(f"layer{i}", w.shape) for i, w in enumerate(self.params.layers)]
        manifest.append(TensorSpec("z_inverse", (self.params.p, self.params.p)))
        flat = np.concatenate([self.params.theta, self.confidence.z_inv.reshape(-1)])
        meta = {
            "features": list(self.features),
            "alpha": self.alpha,
            "lam": self.confidence.lam,
            "update_count": self.confidence.update_count,
            "time_scale": self.cfg.time_scale,
            "drop_scale": self.cfg.drop_scale,
            "log": [
                {"t": o.t, "context": o.context.to_dict(), "batch_time": o.batch_time, "battery_drop": o.battery_drop}
                for o in self.log
            ],
        }
        return encode_container(manifest, flat, meta)

    def load_bytes(self, data: bytes) -> None:
        """Restore a snapshot (stored as float32, so parameters lose precision)."""
        manifest, flat, meta = decode_container(data)
        pos = 0
        layers = []
        for spec in manifest[:-1]:
            layers.append(flat[pos : pos + spec.size].reshape(spec.shape).astype(np.float64))
            pos += spec.size
        self.params = MlpParameters(layers)
        self.features = tuple(meta["features"])
        self.alpha = float(meta["alpha"])
        self.confidence = ConfidenceState(self.params.p, float(meta["lam"]))
        self.confidence.z_inv = flat[pos:].reshape(self.params.p, self.params.p).astype(np.float64)
        self.confidence.update_count = int(meta["update_count"])
        self.log = [
            Observation(ContextVector.from_dict(o["context"]), o["batch_time"], o["battery_drop"], o["t"])
            for o in meta["log"]
        ]


class EstimatorBank:
    kind = "base"

    def estimate(self, client_id: str, c: ContextVector) -> CostEstimate:
        raise NotImplementedError

    def score(self, client_id: str, c: ContextVector) -> UcbScore:
        raise NotImplementedError

    def observe(self, observations: Sequence[Tuple[str, Observation]]) -> None:
        raise NotImplementedError

    def residuals(self) -> np.ndarray:
        return np.zeros((0, 2))

    def training_mse(self) -> Optional[float]:
        """Mean squared normalised residual of the fitted model(s) over everything observed."""
        r = self.residuals()
        return float(np.mean(r**2)) if r.size else None


class NeuralPerClientBank(EstimatorBank):
    kind = "neuralucb_m"

    def __init__(self, client_ids: Iterable[str], cfg: EstimatorConfig, features: Sequence[str] = PERSONAL_FEATURES):
        alpha = cfg.alpha if cfg.alpha is not None else DEFAULT_ALPHA[self.kind]
        self.models: Dict[str, NeuralEstimator] = {
            cid: NeuralEstimator(features, cfg, alpha, seed_tag=cid) for cid in client_ids
        }

    def estimate(self, client_id, c):
        return self.models[client_id].estimate(c)

    def score(self, client_id, c):
        return self.models[client_id].score(c)

    def observe(self, observations):
        touched = []
        for cid, obs in observations:
            self.models[cid].record(obs)
            touched.append(cid)
        for cid in dict.fromkeys(touched):
            self.models[cid].fit()

    def residuals(self):
        parts = [m.residuals() for _, m in sorted(self.models.items())]
        return np.concatenate(parts) if parts else np.zeros((0, 2))

    def save(self, directory: str | os.PathLike) -> None:
        for cid, model in self.models.items():
            atomic_write(os.path.join(directory, f"{cid}.est"), model.to_bytes())

    def load(self, directory: str | os.PathLike) -> None:
        for cid, model in self.models.items():
            with open(os.path.join(directory, f"{cid}.est"), "rb") as fh:
                model.load_bytes(fh.read())


class NeuralSharedBank(EstimatorBank):
    kind = "neuralucb_s"

    def __init__(self, cfg: EstimatorConfig, features: Sequence[str] = CONTEXT_FIELDS):
        alpha = cfg.alpha if cfg.alpha is not None else DEFAULT_ALPHA[self.kind]
        self.model = NeuralEstimator(features, cfg, alpha, seed_tag="shared")

    def estimate(self, client_id, c):
        return self.model.estimate(c)

    def score(self, client_id, c):
        return self.model.score(c)

    def observe(self, observations):
        for _, obs in observations:
            self.model.record(obs)
        if observations:
            self.model.fit()

    def residuals(self):
        return self.model.residuals()


class LinUCBBank(EstimatorBank):
    """Ridge regression per output channel on a shared design matrix."""

    kind = "linucb"

    def __init__(self, cfg: EstimatorConfig, features: Sequence[str] = CONTEXT_FIELDS):
        self.features = tuple(features)
        self.cfg = cfg
        self.alpha = cfg.alpha if cfg.alpha is not None else DEFAULT_ALPHA[self.kind]
        d = len(self.features) + 1
        self.A = cfg.lam * np.eye(d)
        self.b = np.zeros((d, 2))
        self.n_updates = 0
        self._xs: List[np.ndarray] = []
        self._ys: List[np.ndarray] = []

    @property
    def theta_hat(self) -> np.ndarray:
        return np.linalg.solve(self.A, self.b)

    def _raw(self, c: ContextVector) -> np.ndarray:
        return design_row(c, self.features) @ self.theta_hat

    def estimate(self, client_id, c):
        out = self._raw(c) * np.array([self.cfg.time_scale, self.cfg.drop_scale])
        return CostEstimate.clamped(out[0], out[1])

    def bonus(self, c: ContextVector) -> float:
        x = design_row(c, self.features)
        return self.alpha * self.cfg.time_scale * float(np.sqrt(x @ np.linalg.solve(self.A, x)))

    def score(self, client_id, c):
        return UcbScore(-self.estimate(client_id, c).batch_time_hat, self.bonus(c))

    def observe(self, observations):
        for _, obs in observations:
            x = design_row(obs.context, self.features)
            y = np.array([obs.batch_time / self.cfg.time_scale, obs.battery_drop / self.cfg.drop_scale])
            self.A += np.outer(x, x)
            self.b += np.outer(x, y)
            self.n_updates += 1
            self._xs.append(x)
            self._ys.append(y)

    def residuals(self):
        if not self._xs:
            return np.zeros((0, 2))
        return np.stack(self._xs) @ self.theta_hat - np.stack(self._ys)


class FrozenBank(EstimatorBank):
    """Fixed per-client estimates; scores are the plain negated batch times."""

    kind = "frozen"

    def __init__(self, estimates: Mapping[str, Tuple[float, float]]):
        self.estimates = {cid: CostEstimate.clamped(bt, d) for cid, (bt, d) in estimates.items()}

    def estimate(self, client_id, c):
        return self.estimates[client_id]

    def score(self, client_id, c):
        return UcbScore(-self.estimates[client_id].batch_time_hat, 0.0)

    def observe(self, observations):
        pass


def make_bank(kind: str, client_ids: Sequence[str], cfg: EstimatorConfig) -> EstimatorBank:
    if kind == "neuralucb_m":
        return NeuralPerClientBank(client_ids, cfg)
    if kind == "neuralucb_s":
        return NeuralSharedBank(cfg)
    if kind == "linucb":
        return LinUCBBank(cfg)
    raise ValueError(f"unknown estimator kind {kind!r}")
