"""Particle-based state containers shared by the simulator and the SLAM engine."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import as_point

KIND_PA = "pa"
KIND_VRP = "vrp"

_WEIGHT_TOL = 1e-9


@dataclass(frozen=True)
class AgentState:
    """Planar position and velocity of the mobile agent."""

    pos: np.ndarray
    vel: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "pos", as_point(self.pos))
        object.__setattr__(self, "vel", as_point(self.vel))


@dataclass(eq=False)
class AgentBelief:
    """Weighted particles over (x, y, vx, vy)."""

    particles: np.ndarray  # (n, 4)
    weights: np.ndarray  # (n,)

    def __post_init__(self):
        self.particles = np.asarray(self.particles, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.particles.ndim != 2 or self.particles.shape[1] != 4:
            raise ValueError("agent particles must have shape (n, 4)")
        _check_weights(self.weights, self.particles.shape[0])

    def mean_state(self) -> AgentState:
        m = self.weights @ self.particles
        return AgentState(m[:2], m[2:])


@dataclass(eq=False)
class FeatureBelief:
    """Weighted position particles plus existence probability for one feature.

    Feature index 1 is the anchor itself (kind 'pa', owned by pa_index);
    indices >= 2 are virtual reference points shared across anchors
    (pa_index 0).
    """

    kind: str
    particles: np.ndarray  # (n, 2)
    weights: np.ndarray  # (n,)
    existence_prob: float
    feature_index: int
    pa_index: int = 0

    def __post_init__(self):
        if self.kind not in (KIND_PA, KIND_VRP):
            raise ValueError(f"unknown feature kind {self.kind!r}")
        self.particles = np.asarray(self.particles, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.particles.ndim != 2 or self.particles.shape[1] != 2:
            raise ValueError("feature particles must have shape (n, 2)")
        _check_weights(self.weights, self.particles.shape[0])
        if not 0.0 <= self.existence_prob <= 1.0:
            raise ValueError(f"existence_prob {self.existence_prob} outside [0, 1]")
        if self.kind == KIND_PA and self.feature_index != 1:
            raise ValueError("anchor features carry feature index 1")
        if self.kind == KIND_VRP and self.feature_index < 2:
            raise ValueError("virtual reference points carry feature index >= 2")

    def mean(self) -> np.ndarray:
        return self.weights @ self.particles

    def position_variance(self) -> float:
        """Scalar spread: trace of the weighted particle covariance."""
        m = self.mean()
        diff = self.particles - m
        return float(np.sum(self.weights @ (diff * diff)))

    def axis_variances(self) -> np.ndarray:
        m = self.mean()
        diff = self.particles - m
        return self.weights @ (diff * diff)


def _check_weights(w: np.ndarray, n: int) -> None:
    if w.shape != (n,):
        raise ValueError(f"weights shape {w.shape} does not match {n} particles")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    if abs(float(w.sum()) - 1.0) > _WEIGHT_TOL:
        raise ValueError(f"weights must sum to 1, got {w.sum()!r}")


def uniform_weights(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def systematic_resample(weights: np.ndarray, n_out: int, rng: np.random.Generator) -> np.ndarray:
    """Systematic resampling: indices into the particle array."""
    positions = (rng.random() + np.arange(n_out)) / n_out
    cumulative = np.cumsum(weights)
    cumulative[-1] = 1.0  # guard against round-off at the tail
    return np.searchsorted(cumulative, positions)
