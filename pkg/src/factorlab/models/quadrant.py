"""Hybrid quadrant model: a point drifting with a direction chosen by its quadrant.

The plane is split into four half-open quadrants, indexed counterclockwise
from (+,+).  While in quadrant ``s`` the position moves by ``step * d_s``
plus Gaussian noise; the discrete state is the quadrant of the current
position, and the position is observed with Gaussian noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import continuous, discrete
from ..errors import ConfigInvalid
from ..gaussian import CanonicalGaussian, linear_gaussian
from ..hybrid import ConditionalFactor, IndicatorFactor, region_indicator
from ..inference import StateSpaceModel

INF = np.inf
# [lower, upper) boxes for (+,+), (-,+), (-,-), (+,-)
QUADRANT_BOXES = (
    ((0.0, INF), (0.0, INF)),
    ((-INF, 0.0), (0.0, INF)),
    ((-INF, 0.0), (-INF, 0.0)),
    ((0.0, INF), (-INF, 0.0)),
)

_R2 = 1.0 / np.sqrt(2.0)
DEFAULT_DRIFTS = ((-_R2, _R2), (-_R2, -_R2), (_R2, -_R2), (_R2, _R2))


def _spd(name, M, n):
    M = np.asarray(M, dtype=float)
    if M.shape != (n, n) or not np.all(np.isfinite(M)):
        raise ConfigInvalid(f"{name} must be a finite {n}x{n} matrix")
    if not np.allclose(M, M.T, rtol=0, atol=1e-12):
        raise ConfigInvalid(f"{name} must be symmetric")
    if np.linalg.eigvalsh(M)[0] <= 0:
        raise ConfigInvalid(f"{name} must be positive definite")
    return M


@dataclass(frozen=True)
class QuadrantConfig:
    """Parameters of the quadrant model; ``P0`` defaults to ``Q``."""

    drifts: tuple = DEFAULT_DRIFTS
    Q: tuple = ((0.01, 0.0), (0.0, 0.01))
    R: tuple = ((0.05, 0.0), (0.0, 0.05))
    step: float = 0.1
    start: tuple = (1.0, 0.0)
    P0: tuple | None = None
    T: int = 200
    seed: int = 0

    def __post_init__(self):
        d = np.asarray(self.drifts, dtype=float)
        if d.shape != (4, 2) or not np.all(np.isfinite(d)):
            raise ConfigInvalid("drifts must be four 2-vectors")
        _spd("Q", self.Q, 2)
        _spd("R", self.R, 2)
        if self.P0 is not None:
            _spd("P0", self.P0, 2)
        if not np.isfinite(self.step):
            raise ConfigInvalid("step must be finite")
        if np.asarray(self.start, dtype=float).shape != (2,):
            raise ConfigInvalid("start must be a 2-vector")
        if int(self.T) != self.T or self.T < 1:
            raise ConfigInvalid("T must be a positive integer")

    @classmethod
    def from_dict(cls, d: dict) -> "QuadrantConfig":
        known = {"drifts", "Q", "R", "step", "start", "P0", "T", "seed"}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigInvalid(f"unknown config fields: {unknown}")
        return cls(**{k: _tuplify(v) for k, v in d.items()})

    def to_dict(self) -> dict:
        out = {
            "drifts": np.asarray(self.drifts, dtype=float).tolist(),
            "Q": np.asarray(self.Q, dtype=float).tolist(),
            "R": np.asarray(self.R, dtype=float).tolist(),
            "step": float(self.step),
            "start": np.asarray(self.start, dtype=float).tolist(),
            "T": int(self.T),
            "seed": int(self.seed),
        }
        if self.P0 is not None:
            out["P0"] = np.asarray(self.P0, dtype=float).tolist()
        return out


def _tuplify(v):
    if isinstance(v, list):
        return tuple(_tuplify(x) for x in v)
    return v


def quadrant_indicator(selector, f1, f2) -> IndicatorFactor:
    return region_indicator(selector, [f1, f2], [{f1.name: b1, f2.name: b2} for b1, b2 in QUADRANT_BOXES])


def quadrant_of(f1, f2) -> np.ndarray:
    """Quadrant index of points under the half-open convention."""
    f1, f2 = np.asarray(f1, dtype=float), np.asarray(f2, dtype=float)
    right, up = f1 >= 0, f2 >= 0
    return np.where(up, np.where(right, 0, 1), np.where(right, 3, 2))


def quadrant_model(cfg: QuadrantConfig | None = None) -> StateSpaceModel:
    cfg = QuadrantConfig() if cfg is None else cfg
    S, F1, F2 = discrete("S", 4), continuous("F1"), continuous("F2")
    Sn, F1n, F2n = discrete("S_next", 4), continuous("F1_next"), continuous("F2_next")
    Y1, Y2 = continuous("Y1"), continuous("Y2")
    Q = np.asarray(cfg.Q, dtype=float)
    P0 = Q if cfg.P0 is None else np.asarray(cfg.P0, dtype=float)
    drifts = np.asarray(cfg.drifts, dtype=float)
    moves = [linear_gaussian([F1, F2], [F1n, F2n], np.eye(2), cfg.step * drifts[s], Q) for s in range(4)]
    return StateSpaceModel(
        state=(S, F1, F2),
        next_state=(Sn, F1n, F2n),
        observed=(Y1, Y2),
        prior=(CanonicalGaussian.from_moments([F1, F2], cfg.start, P0), quadrant_indicator(S, F1, F2)),
        transition=(ConditionalFactor([S], [F1, F2, F1n, F2n], moves), quadrant_indicator(Sn, F1n, F2n)),
        observation=(linear_gaussian([F1, F2], [Y1, Y2], np.eye(2), np.zeros(2), cfg.R),),
        name="quadrant",
        description="hybrid quadrant-switching drift model",
    )
