"""Synthetic radio world: floor plans, trajectories, and measurement generation.

Walls are finite segments for visibility checks but mirror as infinite lines
(standard image method).  Only line-of-sight and single-bounce specular paths
are generated.  Passive measurements are time-of-arrival values in seconds
with missed detections and Poisson clutter; active scans synthesize echoes
per beam and range them with the ML estimator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT

from . import active
from .beliefs import AgentState
from .geometry import as_point

_EPS = 1e-9


@dataclass(frozen=True)
class Wall:
    """Reflective segment between two endpoints."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", as_point(self.a))
        object.__setattr__(self, "b", as_point(self.b))
        if np.linalg.norm(self.b - self.a) < _EPS:
            raise ValueError("wall endpoints coincide")

    def unit_normal(self) -> np.ndarray:
        d = self.b - self.a
        n = np.array([-d[1], d[0]])
        return n / np.linalg.norm(n)

    def mirror(self, p: np.ndarray) -> np.ndarray:
        """Mirror a point across the infinite line through the wall."""
        n = self.unit_normal()
        return p - 2.0 * np.dot(p - self.a, n) * n


@dataclass(frozen=True)
class Scenario:
    walls: list[Wall]
    pas: list[np.ndarray]
    waypoints: list[np.ndarray]
    step_length: float
    sample_period: float

    def __post_init__(self):
        object.__setattr__(self, "pas", [as_point(p) for p in self.pas])
        object.__setattr__(self, "waypoints", [as_point(p) for p in self.waypoints])
        if len(self.pas) < 1:
            raise ValueError("scenario needs at least one anchor")
        if self.step_length <= 0 or self.sample_period <= 0:
            raise ValueError("step_length and sample_period must be positive")

    @property
    def rp(self) -> np.ndarray:
        """Reference point: the agent's start position."""
        return self.waypoints[0]


@dataclass(frozen=True)
class NoiseModel:
    """Measurement imperfections, with the TOA std given in meters."""

    toa_sigma: float
    p_detect: float
    mu_false: float
    roi_radius: float

    def __post_init__(self):
        if not 0.0 < self.p_detect <= 1.0:
            raise ValueError("p_detect must be in (0, 1]")
        if self.mu_false < 0:
            raise ValueError("mu_false must be nonnegative")
        if self.toa_sigma <= 0 or self.roi_radius <= 0:
            raise ValueError("toa_sigma and roi_radius must be positive")

    def clutter_density(self) -> float:
        """Uniform clutter density over the ROI diameter, in range units."""
        return 1.0 / (2.0 * self.roi_radius)


@dataclass(frozen=True)
class MeasurementFrame:
    """Per-anchor TOA lists (seconds) for one time slot."""

    t: int
    per_pa: list[np.ndarray]

    def __post_init__(self):
        per_pa = [np.asarray(z, dtype=float) for z in self.per_pa]
        for z in per_pa:
            if np.any(z <= 0):
                raise ValueError("TOA values must be positive")
        object.__setattr__(self, "per_pa", per_pa)


def _segment_params(p1, p2, q1, q2):
    """Intersection parameters (s, u) of segments p1->p2 and q1->q2, or None."""
    r = p2 - p1
    s = q2 - q1
    denom = r[0] * s[1] - r[1] * s[0]
    if abs(denom) < 1e-15:
        return None
    qp = q1 - p1
    t = (qp[0] * s[1] - qp[1] * s[0]) / denom
    u = (qp[0] * r[1] - qp[1] * r[0]) / denom
    return t, u


def _blocked(p1: np.ndarray, p2: np.ndarray, walls, skip: Wall | None) -> bool:
    """True when some wall segment (other than `skip`) crosses p1->p2 strictly."""
    for w in walls:
        if w is skip:
            continue
        params = _segment_params(p1, p2, w.a, w.b)
        if params is None:
            continue
        t, u = params
        if 1e-9 < t < 1.0 - 1e-9 and 1e-9 < u < 1.0 - 1e-9:
            return True
    return False


def visible_single_bounce(agent, pa, wall: Wall, all_walls) -> float | None:
    """Path length of the specular bounce off `wall`, or None when absent.

    Image method: the bounce exists when the segment agent->mirror(pa) meets
    the wall segment at a point q and neither leg agent->q nor q->pa is
    occluded by another wall.  The returned length equals the distance from
    the agent to the mirror image.
    """
    agent, pa = as_point(agent), as_point(pa)
    va = wall.mirror(pa)
    params = _segment_params(agent, va, wall.a, wall.b)
    if params is None:
        return None
    t, u = params
    if not (_EPS < t < 1.0 - _EPS and 0.0 <= u <= 1.0):
        return None
    q = agent + t * (va - agent)
    if _blocked(agent, q, all_walls, skip=wall):
        return None
    if _blocked(q, pa, all_walls, skip=wall):
        return None
    return float(np.linalg.norm(agent - va))


@dataclass(frozen=True)
class AnchorTruth:
    """Ground-truth feature set of one anchor: its VAs and the shared VRPs."""

    pa: np.ndarray
    vas: np.ndarray  # (n_walls, 2)
    vrps: np.ndarray  # (n_walls, 2)


def ground_truth_features(scn: Scenario) -> list[AnchorTruth]:
    """Per anchor: mirror images of the anchor and of RP across every wall line."""
    rp = scn.rp
    vrps = np.array([w.mirror(rp) for w in scn.walls])
    out = []
    for pa in scn.pas:
        vas = np.array([w.mirror(pa) for w in scn.walls])
        out.append(AnchorTruth(pa=pa, vas=vas, vrps=vrps))
    return out


def noiseless_ranges(scn: Scenario, agent) -> list[np.ndarray]:
    """Per anchor: LOS range plus every visible single-bounce path length."""
    agent = as_point(agent)
    out = []
    for pa in scn.pas:
        ranges = [float(np.linalg.norm(agent - pa))]
        for wall in scn.walls:
            length = visible_single_bounce(agent, pa, wall, scn.walls)
            if length is not None:
                ranges.append(length)
        out.append(np.asarray(ranges))
    return out


def measurements_at(
    scn: Scenario, noise: NoiseModel, agent, t: int, rng: np.random.Generator
) -> MeasurementFrame:
    """Noisy TOA frame for an explicit agent position."""
    per_pa = []
    for ranges in noiseless_ranges(scn, agent):
        kept = ranges[rng.random(ranges.size) < noise.p_detect]
        toas = (kept + rng.standard_normal(kept.size) * noise.toa_sigma) / SPEED_OF_LIGHT
        # redraw the vanishingly rare nonpositive perturbations
        while np.any(toas <= 0):
            bad = toas <= 0
            toas[bad] = (kept[bad] + rng.standard_normal(int(bad.sum()))
                         * noise.toa_sigma) / SPEED_OF_LIGHT
        n_clutter = rng.poisson(noise.mu_false)
        clutter = rng.uniform(0.0, 2.0 * noise.roi_radius / SPEED_OF_LIGHT, n_clutter)
        clutter = clutter[clutter > 0]
        toas = np.concatenate([toas, clutter])
        per_pa.append(rng.permutation(toas))
    return MeasurementFrame(t=t, per_pa=per_pa)


def generate_measurements(scn: Scenario, noise: NoiseModel, t: int, rng) -> MeasurementFrame:
    """Noisy TOA frame at trajectory step t (deterministic under a fixed seed)."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    traj = generate_trajectory(scn)
    if not 0 <= t < len(traj):
        raise ValueError(f"step {t} outside trajectory of length {len(traj)}")
    return measurements_at(scn, noise, traj[t].pos, t, rng)


def _first_wall_hit(scn: Scenario, origin: np.ndarray, direction: np.ndarray):
    """Nearest wall intersection along a ray: (distance, wall) or None."""
    best = None
    for wall in scn.walls:
        seg = wall.b - wall.a
        denom = direction[0] * seg[1] - direction[1] * seg[0]
        if abs(denom) < 1e-15:
            continue
        qp = wall.a - origin
        d = (qp[0] * seg[1] - qp[1] * seg[0]) / denom
        u = (qp[0] * direction[1] - qp[1] * direction[0]) / denom
        if d > 1e-9 and 0.0 <= u <= 1.0:
            if best is None or d < best[0]:
                best = (d, wall)
    return best


def _scene_extent(scn: Scenario) -> float:
    pts = np.vstack([np.vstack([w.a, w.b]) for w in scn.walls])
    return float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))


def generate_active_scan(
    scn: Scenario, cfg: active.SignalConfig, agent, n_beams: int, rng
) -> list[active.Rsp]:
    """Sweep n_beams directions, sound the first wall hit by each beam.

    Beams that hit nothing, graze a wall, or return an echo with no usable
    peak produce no sample point.
    """
    if n_beams < 1:
        raise ValueError("need at least one beam")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    agent = as_point(agent)
    d_max = 1.5 * _scene_extent(scn) + 10.0
    rsps = []
    for i in range(n_beams):
        phi = 2.0 * np.pi * i / n_beams
        direction = np.array([np.cos(phi), np.sin(phi)])
        hit = _first_wall_hit(scn, agent, direction)
        if hit is None:
            continue
        d, wall = hit
        cos_inc = abs(float(np.dot(direction, wall.unit_normal())))
        if cos_inc < 1e-9:
            continue
        psi = float(np.arccos(min(cos_inc, 1.0)))
        rcs = active.rcs_of_incidence(cfg, psi)
        echo = active.simulate_echo(cfg, d, rcs, rng)
        try:
            # stricter peak gate than the estimator default: a pure-noise
            # periodogram max sits near 8x its median, so 20x rejects beams
            # whose echo fell below the detection floor
            d_hat, d_var = active.estimate_distance(echo, cfg, rcs=rcs, d_max=d_max,
                                                    peak_threshold=20.0)
        except active.NoEchoPeakError:
            continue
        rsps.append(active.Rsp(phi=phi, d_mean=d_hat, d_var=d_var))
    return rsps


def generate_trajectory(scn: Scenario) -> list[AgentState]:
    """Piecewise-linear waypoint interpolation at step_length spacing."""
    if len(scn.waypoints) < 2:
        raise ValueError("need at least two waypoints")
    pts = np.asarray(scn.waypoints, dtype=float)
    seg = np.diff(pts, axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    if np.any(seg_len < _EPS):
        raise ValueError("consecutive waypoints coincide")
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = cum[-1]
    arcs = np.arange(0.0, total + 1e-9, scn.step_length)
    idx = np.clip(np.searchsorted(cum, arcs, side="right") - 1, 0, len(seg) - 1)
    frac = (arcs - cum[idx]) / seg_len[idx]
    positions = pts[idx] + frac[:, None] * seg[idx]
    velocities = np.empty_like(positions)
    velocities[1:] = np.diff(positions, axis=0) / scn.sample_period
    velocities[0] = velocities[1] if len(positions) > 1 else 0.0
    return [AgentState(p, v) for p, v in zip(positions, velocities)]
