"""Hard-concrete gates: reparameterized sampling, expected openness, inference estimators."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit, logit

from .spline import InvalidInputError

OPEN_LOGIT = 20.0


@dataclass(frozen=True)
class GateParams:
    tau: float = 2.0 / 3.0
    gamma: float = -0.1
    zeta: float = 1.1

    def __post_init__(self):
        if not (self.tau > 0 and self.gamma < 0 and self.zeta > 1):
            raise InvalidInputError(f"invalid gate params {self}")

    @property
    def threshold_logit(self) -> float:
        """Logit at which the expected gate value equals one half."""
        return self.tau * math.log(-self.gamma / self.zeta)


@dataclass
class GateBank:
    logits: np.ndarray
    params: GateParams = GateParams()
    trainable: bool = True

    def __post_init__(self):
        self.logits = np.asarray(self.logits, dtype=float)
        if not np.all(np.isfinite(self.logits)):
            raise InvalidInputError("non-finite gate logits")

    @classmethod
    def full(cls, shape, logit: float, params: GateParams = GateParams(), trainable: bool = True) -> GateBank:
        return cls(np.full(shape, float(logit)), params, trainable)

    @classmethod
    def frozen_open(cls, shape, params: GateParams = GateParams()) -> GateBank:
        return cls.full(shape, OPEN_LOGIT, params, trainable=False)

    @property
    def size(self) -> int:
        return self.logits.size

    def copy(self) -> GateBank:
        return replace(self, logits=self.logits.copy())


@dataclass
class GateSample:
    """Sampled gate values and their pathwise derivative w.r.t. the logits."""

    values: np.ndarray
    dvalues_dlogits: np.ndarray


def draw_noise(rng: np.random.Generator, shape) -> np.ndarray:
    # open interval (0, 1): Generator.random may return exactly 0
    u = rng.random(shape)
    return np.where(u == 0.0, np.nextafter(0.0, 1.0), u)


def sample_gates(bank: GateBank, u) -> GateSample:
    u = np.asarray(u, dtype=float)
    if u.shape != bank.logits.shape:
        raise InvalidInputError(f"noise shape {u.shape} != logits shape {bank.logits.shape}")
    if np.any(u <= 0.0) or np.any(u >= 1.0):
        raise InvalidInputError("uniform noise must lie strictly inside (0, 1)")
    p = bank.params
    s = expit((logit(u) + bank.logits) / p.tau)
    stretched = s * (p.zeta - p.gamma) + p.gamma
    z = np.clip(stretched, 0.0, 1.0)
    inside = (stretched > 0.0) & (stretched < 1.0)
    dz = np.where(inside, (p.zeta - p.gamma) * s * (1.0 - s) / p.tau, 0.0)
    return GateSample(z, dz)


def expected_open(bank: GateBank) -> np.ndarray:
    return expit(bank.logits - bank.params.threshold_logit)


def expected_open_grad(bank: GateBank) -> np.ndarray:
    p = expected_open(bank)
    return p * (1.0 - p)


def inference_gates_threshold(bank: GateBank) -> np.ndarray:
    return (expected_open(bank) > 0.5).astype(float)


def inference_gates_louizos(bank: GateBank) -> np.ndarray:
    p = bank.params
    return np.clip(expit(bank.logits) * (p.zeta - p.gamma) + p.gamma, 0.0, 1.0)


def decisiveness(bank: GateBank) -> float:
    """Mean of max(p, 1 - p) over gates, where p is the probability of being open."""
    if bank.size == 0:
        raise InvalidInputError("decisiveness of an empty gate bank")
    p = expected_open(bank)
    return float(np.mean(np.maximum(p, 1.0 - p)))
