"""Inverse design matrix maintained by rank-one Sherman-Morrison updates."""

from __future__ import annotations

import numpy as np


class ConfidenceDecayError(ArithmeticError):
    """Maintained inverse lost positive definiteness; re-initialise the state."""


class ConfidenceState:
    """Holds Z^{-1} for Z = lam*I + sum_i g_i g_i^T / m."""

    def __init__(self, p: int, lam: float = 1.0):
        if lam <= 0:
            raise ValueError("lam must be positive")
        self.p = int(p)
        self.lam = float(lam)
        self.z_inv = np.eye(self.p) / self.lam
        self.update_count = 0

    def reset(self) -> None:
        self.z_inv = np.eye(self.p) / self.lam
        self.update_count = 0

    def quadratic(self, g: np.ndarray) -> float:
        q = float(g @ self.z_inv @ g)
        if q < 0.0 or not np.isfinite(q):
            raise ConfidenceDecayError(f"quadratic form {q} is not positive")
        return q

    def update(self, g: np.ndarray, m: float = 1.0) -> None:
        g = np.asarray(g, dtype=np.float64)
        if g.shape != (self.p,):
            raise ValueError(f"gradient length {g.shape} != {self.p}")
        if not np.any(g):
            return
        u = g / np.sqrt(m)
        zu = self.z_inv @ u
        denom = 1.0 + float(u @ zu)
        self.z_inv -= np.outer(zu, zu) / denom
        self.z_inv = 0.5 * (self.z_inv + self.z_inv.T)
        self.update_count += 1


def update_confidence(state: ConfidenceState, g: np.ndarray, m: float = 1.0) -> ConfidenceState:
    state.update(g, m)
    return state
