"""Particle belief-propagation SLAM over multipath TOA measurements.

One time slot processes the anchors sequentially: agent prediction once, then
per anchor a pass of feature prediction, measurement evaluation, loopy data
association under the exclusion constraint, and belief fusion.  Virtual
reference points flow through every anchor's pass; each anchor feature is
visible only to its own pass.  After the last pass the feature set is
variance-gated against the previous slot and pruned.

Agent/feature pairs are evaluated particle-by-particle (both beliefs hold the
same particle count), the standard joint-importance-sampling shortcut for
particle BP SLAM.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT

from .beliefs import (
    KIND_PA,
    KIND_VRP,
    AgentBelief,
    AgentState,
    FeatureBelief,
    systematic_resample,
    uniform_weights,
)
from .geometry import (
    SurfaceFrame,
    as_point,
    va_from_pa,
    va_from_pa_batch,
    vrp_from_pa_va_batch,
)
from .scenario import MeasurementFrame

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_MSG_TOL = 1e-6
_TINY = 1e-300


class DegenerateWeightsError(RuntimeError):
    """All particle weights underflowed during a belief update."""


@dataclass(frozen=True)
class SlamParams:
    """Tunables of the SLAM engine (survival, detection, birth, pruning)."""

    p_detect: float = 0.95
    p_survive: float = 0.999
    mu_false: float = 1.0
    mu_new: float = 1e-4
    prune_threshold: float = 1e-4
    detect_threshold: float = 0.5
    sim_threshold: float = 1.0
    n_particles: int = 5000
    driving_var_agent: float = 0.0278
    driving_var_feature: float = 1e-8
    da_iterations: int = 20
    toa_sigma: float = 0.1
    roi_radius: float = 180.0

    def __post_init__(self):
        for name in ("p_detect", "p_survive"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must be in (0, 1]")
        for name in ("prune_threshold", "detect_threshold", "sim_threshold",
                     "toa_sigma", "roi_radius"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.mu_false < 0 or self.mu_new < 0:
            raise ValueError("clutter and birth means must be nonnegative")
        if self.n_particles < 1 or self.da_iterations < 1:
            raise ValueError("n_particles and da_iterations must be >= 1")

    @property
    def clutter_density(self) -> float:
        """Uniform false-alarm density over the ROI diameter (range units)."""
        return 1.0 / (2.0 * self.roi_radius)


@dataclass
class AssociationMarginals:
    """Approximate association posteriors from loopy message passing.

    feature_marginals[i, j] is P(feature i generated measurement j), with
    column 0 the miss hypothesis.  measurement_marginals[j, i] is
    P(measurement j came from feature i), with column 0 the
    not-a-legacy-feature hypothesis.  messages_to_features holds the final
    measurement-to-feature messages needed to fuse beliefs without double
    counting.
    """

    feature_marginals: np.ndarray  # (n_features, n_meas + 1)
    measurement_marginals: np.ndarray  # (n_meas, n_features + 1)
    messages_to_features: np.ndarray  # (n_features, n_meas)


@dataclass
class SlamState:
    agent: AgentBelief
    features: list[FeatureBelief]
    rp: np.ndarray
    sample_period: float
    t: int = 0
    next_feature_index: int = 2
    degenerate_events: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# prediction
# ---------------------------------------------------------------------------

def predict_agent(belief: AgentBelief, params: SlamParams, dt: float,
                  rng: np.random.Generator) -> AgentBelief:
    """Constant-velocity transition with Gaussian driving noise on velocity."""
    p = belief.particles.copy()
    p[:, 0] += dt * p[:, 2]
    p[:, 1] += dt * p[:, 3]
    p[:, 2:] += rng.standard_normal((p.shape[0], 2)) * math.sqrt(params.driving_var_agent)
    return AgentBelief(p, belief.weights.copy())


def predict_features(features: list[FeatureBelief], params: SlamParams,
                     rng: np.random.Generator) -> list[FeatureBelief]:
    """Survival-probability decay plus a tiny stabilizing position jitter."""
    out = []
    sigma = math.sqrt(params.driving_var_feature)
    for f in features:
        jitter = rng.standard_normal(f.particles.shape) * sigma
        out.append(FeatureBelief(
            kind=f.kind,
            particles=f.particles + jitter,
            weights=f.weights.copy(),
            existence_prob=f.existence_prob * params.p_survive,
            feature_index=f.feature_index,
            pa_index=f.pa_index,
        ))
    return out


# ---------------------------------------------------------------------------
# scalar factor evaluations (the vectorized pass machinery mirrors these)
# ---------------------------------------------------------------------------

def _norm_pdf(x: float, sigma: float) -> float:
    return math.exp(-0.5 * (x / sigma) ** 2) / (_SQRT_2PI * sigma)


def toa_likelihood(z: float, agent: AgentState, feature_pos, toa_sigma: float,
                   rp=None, pa=None) -> float:
    """Gaussian range likelihood of one TOA (seconds) given agent and feature.

    For a virtual-reference-point feature pass rp and the anchor estimate pa;
    the predicted range then uses the anchor's mirror image through the
    feature's surface.
    """
    if toa_sigma <= 0:
        raise ValueError("toa_sigma must be positive")
    feature_pos = as_point(feature_pos)
    if rp is not None:
        target = va_from_pa(SurfaceFrame(as_point(rp), feature_pos), pa)
    else:
        target = feature_pos
    predicted = float(np.linalg.norm(agent.pos - target))
    return _norm_pdf(SPEED_OF_LIGHT * z - predicted, toa_sigma)


def g_factor(agent: AgentState, feature_pos, exists: bool, a_value: int,
             frame: np.ndarray, params: SlamParams, rp=None, pa=None) -> float:
    """Legacy-feature association factor for one particle pair.

    frame holds the TOA measurements (seconds) of the current anchor;
    a_value indexes them 1-based, 0 meaning no measurement.
    """
    frame = np.asarray(frame, dtype=float)
    if not 0 <= a_value <= frame.size:
        raise ValueError(f"a_value {a_value} outside 0..{frame.size}")
    if not exists:
        return 1.0
    if a_value == 0:
        return 1.0 - params.p_detect
    lik = toa_likelihood(frame[a_value - 1], agent, feature_pos,
                         params.toa_sigma, rp=rp, pa=pa)
    return lik * params.p_detect / (params.mu_false * params.clutter_density)


def h_factor(agent: AgentState, feature_pos, exists: bool, b_value: int,
             z: float, params: SlamParams, rp=None, pa=None) -> float:
    """New-feature association factor for one particle pair.

    b_value 0 means the measurement is not explained by any legacy feature.
    The birth proposal places the implied virtual anchor on the measured
    range circle, so its density is evaluated in virtual-anchor space.
    """
    if b_value < 0:
        raise ValueError("b_value must be nonnegative")
    if not exists:
        return 1.0  # constant dummy density
    if b_value != 0:
        return 0.0
    feature_pos = as_point(feature_pos)
    if rp is not None:
        target = va_from_pa(SurfaceFrame(as_point(rp), feature_pos), pa)
    else:
        target = feature_pos
    r = float(np.linalg.norm(agent.pos - target))
    if r <= 0:
        return 0.0
    f_new = _norm_pdf(r - SPEED_OF_LIGHT * z, params.toa_sigma) / (2.0 * math.pi * r)
    lik = _norm_pdf(SPEED_OF_LIGHT * z - r, params.toa_sigma)
    return params.mu_new * f_new * lik / (params.mu_false * params.clutter_density)


# ---------------------------------------------------------------------------
# measurement evaluation
# ---------------------------------------------------------------------------

@dataclass
class PassEvaluation:
    """Per-particle likelihood tables and birth proposals for one anchor pass."""

    ranges: np.ndarray  # (m,) measured ranges in meters
    likelihood: np.ndarray  # (n_features, m, n_particles)
    joint_weights: np.ndarray  # (n_particles,) paired agent x feature weights
    weights: np.ndarray  # (n_features, m + 1) marginalized legacy messages
    new_weights: np.ndarray  # (m,) marginalized new-feature messages (1 + birth)
    birth_share: np.ndarray  # (m,) birth fraction of the b=0 mass
    birth_particles: np.ndarray  # (m, n_particles, 2) proposed VRP positions
    birth_likelihood: np.ndarray  # (m, n_particles)


def _feature_targets(feature: FeatureBelief, rp: np.ndarray, pa_mean) -> tuple[np.ndarray, np.ndarray]:
    """Measurement-facing positions of a feature's particles (VA for VRPs)."""
    if feature.kind == KIND_PA:
        return feature.particles, np.ones(len(feature.particles), dtype=bool)
    if pa_mean is None:
        return feature.particles, np.zeros(len(feature.particles), dtype=bool)
    return va_from_pa_batch(rp, feature.particles, pa_mean)


def evaluate_measurements(
    agent: AgentBelief,
    features: list[FeatureBelief],
    ranges: np.ndarray,
    rp: np.ndarray,
    pa_mean,
    params: SlamParams,
    rng: np.random.Generator,
) -> PassEvaluation:
    """Build the likelihood tables and association weight matrices of a pass."""
    ranges = np.asarray(ranges, dtype=float)
    m = ranges.size
    n = agent.particles.shape[0]
    upos = agent.particles[:, :2]
    sigma = params.toa_sigma
    fc = params.mu_false * params.clutter_density

    lik = np.zeros((len(features), m, n))
    weights = np.zeros((len(features), m + 1))
    joint = agent.weights.copy()
    for i, f in enumerate(features):
        targets, valid = _feature_targets(f, rp, pa_mean)
        rho = np.linalg.norm(upos - targets, axis=1)
        err = ranges[:, None] - rho[None, :]
        lik_i = np.exp(-0.5 * (err / sigma) ** 2) / (_SQRT_2PI * sigma)
        lik_i[:, ~valid] = 0.0
        lik[i] = lik_i
        wj = agent.weights * f.weights
        total = wj.sum()
        wj = wj / total if total > 0 else uniform_weights(n)
        e = f.existence_prob
        weights[i, 0] = 1.0 - e + e * (1.0 - params.p_detect)
        weights[i, 1:] = e * params.p_detect * (lik_i @ wj) / fc

    # birth proposal: virtual anchors on the measured range circles around the
    # agent particles, mirrored back into VRP space through the anchor estimate
    birth_particles = np.zeros((m, n, 2))
    birth_lik = np.zeros((m, n))
    birth_mass = np.zeros(m)
    if m > 0 and pa_mean is not None:
        for j in range(m):
            theta = rng.uniform(0.0, 2.0 * np.pi, n)
            radius = ranges[j] + rng.standard_normal(n) * sigma
            radius = np.abs(radius)
            vas = upos + radius[:, None] * np.column_stack([np.cos(theta), np.sin(theta)])
            vrps, valid = vrp_from_pa_va_batch(rp, pa_mean, vas)
            rho = np.linalg.norm(upos - vas, axis=1)
            lj = np.exp(-0.5 * ((ranges[j] - rho) / sigma) ** 2) / (_SQRT_2PI * sigma)
            lj[~valid] = 0.0
            birth_particles[j] = vrps
            birth_lik[j] = lj
            birth_mass[j] = params.mu_new * float(lj @ joint) / fc
    new_weights = 1.0 + birth_mass
    birth_share = birth_mass / new_weights

    return PassEvaluation(
        ranges=ranges,
        likelihood=lik,
        joint_weights=joint,
        weights=weights,
        new_weights=new_weights,
        birth_share=birth_share,
        birth_particles=birth_particles,
        birth_likelihood=birth_lik,
    )


# ---------------------------------------------------------------------------
# loopy data association
# ---------------------------------------------------------------------------

def loopy_data_association(weights: np.ndarray, new_weights: np.ndarray,
                           params: SlamParams) -> AssociationMarginals:
    """Sum-product message passing on the bipartite association graph.

    weights[i, 0] is the miss message of legacy feature i and weights[i, j]
    its message for measurement j; new_weights[j] bundles the clutter and
    birth mass of measurement j.  Iterates until the message change falls
    below 1e-6 or the configured iteration cap; the last iterate is returned
    even without convergence.
    """
    weights = np.atleast_2d(np.asarray(weights, dtype=float))
    new_weights = np.asarray(new_weights, dtype=float)
    n_f = weights.shape[0] if weights.size else 0
    m = new_weights.size
    if weights.size and weights.shape[1] != m + 1:
        raise ValueError("weight matrix must have one column per measurement plus miss")

    if n_f == 0:
        return AssociationMarginals(
            feature_marginals=np.zeros((0, m + 1)),
            measurement_marginals=np.hstack([np.ones((m, 1)), np.zeros((m, 0))]),
            messages_to_features=np.zeros((0, m)),
        )

    w0 = weights[:, 0]
    wm = weights[:, 1:]
    mu_ba = np.ones((n_f, m))
    nu = np.zeros((n_f, m))
    for _ in range(params.da_iterations):
        prod = wm * mu_ba
        s_feat = w0 + prod.sum(axis=1)
        nu = wm / np.maximum(s_feat[:, None] - prod, _TINY)
        s_meas = new_weights + nu.sum(axis=0)
        mu_new = 1.0 / np.maximum(s_meas[None, :] - nu, _TINY)
        delta = float(np.max(np.abs(mu_new - mu_ba))) if m else 0.0
        mu_ba = mu_new
        if delta < _MSG_TOL:
            break
    prod = wm * mu_ba
    s_feat = w0 + prod.sum(axis=1)
    nu = wm / np.maximum(s_feat[:, None] - prod, _TINY)

    feat = np.hstack([w0[:, None], prod])
    feat /= np.maximum(feat.sum(axis=1, keepdims=True), _TINY)
    meas = np.hstack([new_weights[:, None], nu.T])
    meas /= np.maximum(meas.sum(axis=1, keepdims=True), _TINY)
    return AssociationMarginals(
        feature_marginals=feat,
        measurement_marginals=meas,
        messages_to_features=mu_ba,
    )


# ---------------------------------------------------------------------------
# belief fusion
# ---------------------------------------------------------------------------

def _resample(particles: np.ndarray, weights: np.ndarray, n_out: int,
              rng: np.random.Generator) -> np.ndarray:
    idx = systematic_resample(weights, n_out, rng)
    return particles[idx]


def update_beliefs(
    agent: AgentBelief,
    features: list[FeatureBelief],
    marginals: AssociationMarginals,
    ev: PassEvaluation,
    params: SlamParams,
    rng: np.random.Generator,
    state: SlamState | None = None,
) -> tuple[AgentBelief, list[FeatureBelief]]:
    """Fuse association messages into agent, legacy and new feature beliefs.

    Every returned belief is resampled back to n_particles.  A belief whose
    weights all underflow is re-seeded from its prior and the event recorded
    on the state.
    """
    n = agent.particles.shape[0]
    m = ev.ranges.size
    mu_ba = marginals.messages_to_features
    fc = params.mu_false * params.clutter_density

    # kappa[i, p]: per-particle association-weighted likelihood mixture
    kappa = np.full((len(features), n), 1.0 - params.p_detect)
    if m:
        for i in range(len(features)):
            kappa[i] += params.p_detect / fc * (mu_ba[i][None, :] @ ev.likelihood[i])[0]

    updated = []
    agent_log_w = np.log(np.maximum(agent.weights, _TINY))
    for i, f in enumerate(features):
        e = f.existence_prob
        w_new = f.weights * kappa[i]
        total = float(w_new.sum())
        q1 = e * total
        existence = q1 / (q1 + (1.0 - e)) if (q1 + (1.0 - e)) > 0 else 0.0
        if not np.isfinite(total) or total <= 0.0:
            if state is not None:
                state.degenerate_events.append((state.t, f.feature_index))
            w_norm = f.weights
        else:
            w_norm = w_new / total
        particles = _resample(f.particles, w_norm, n, rng)
        updated.append(FeatureBelief(
            kind=f.kind,
            particles=particles,
            weights=uniform_weights(n),
            existence_prob=min(max(existence, 0.0), 1.0),
            feature_index=f.feature_index,
            pa_index=f.pa_index,
        ))
        # agent absorbs the same per-particle mixture, existence-weighted
        agent_log_w += np.log(np.maximum((1.0 - e) + e * kappa[i], _TINY))

    agent_log_w -= agent_log_w.max()
    agent_w = np.exp(agent_log_w)
    total = float(agent_w.sum())
    if not np.isfinite(total) or total <= 0.0:
        if state is not None:
            state.degenerate_events.append((state.t, "agent"))
        agent_w = agent.weights
    else:
        agent_w = agent_w / total
    agent_particles = _resample(agent.particles, agent_w, n, rng)
    new_agent = AgentBelief(agent_particles, uniform_weights(n))

    # births from measurements with enough unexplained mass
    for j in range(m):
        p_unclaimed = marginals.measurement_marginals[j, 0] if m else 1.0
        existence = float(p_unclaimed * ev.birth_share[j])
        if existence < params.prune_threshold:
            continue
        w = ev.birth_likelihood[j] * ev.joint_weights
        total = float(w.sum())
        if total <= 0.0 or not np.isfinite(total):
            continue
        particles = _resample(ev.birth_particles[j], w / total, n, rng)
        index = state.next_feature_index if state is not None else 2
        if state is not None:
            state.next_feature_index += 1
        updated.append(FeatureBelief(
            kind=KIND_VRP,
            particles=particles,
            weights=uniform_weights(n),
            existence_prob=min(existence, 1.0),
            feature_index=index,
            pa_index=0,
        ))

    return new_agent, updated


# ---------------------------------------------------------------------------
# full step and estimation
# ---------------------------------------------------------------------------

def _pass_legacy_split(features: list[FeatureBelief], k: int):
    legacy, rest = [], []
    for f in features:
        if f.kind == KIND_VRP or (f.kind == KIND_PA and f.pa_index == k):
            legacy.append(f)
        else:
            rest.append(f)
    return legacy, rest


def step(state: SlamState, frame: MeasurementFrame, params: SlamParams,
         rng: np.random.Generator) -> SlamState:
    """Advance one time slot: predict, per-anchor passes, refine, prune."""
    from .refine import refine  # local import to avoid a cycle

    state.t = frame.t
    snapshot = list(state.features)
    agent = predict_agent(state.agent, params, state.sample_period, rng)

    features = state.features
    for k, toas in enumerate(frame.per_pa, start=1):
        ranges = np.asarray(toas, dtype=float) * SPEED_OF_LIGHT
        legacy, rest = _pass_legacy_split(features, k)
        legacy = predict_features(legacy, params, rng)
        pa_mean = next((f.mean() for f in legacy
                        if f.kind == KIND_PA and f.pa_index == k), None)
        ev = evaluate_measurements(agent, legacy, ranges, state.rp, pa_mean,
                                   params, rng)
        marginals = loopy_data_association(ev.weights, ev.new_weights, params)
        agent, legacy = update_beliefs(agent, legacy, marginals, ev, params,
                                       rng, state=state)
        features = rest + legacy

    features = refine(snapshot, features, params.sim_threshold)
    features = [f for f in features if f.existence_prob >= params.prune_threshold]

    state.agent = agent
    state.features = features
    return state


@dataclass(frozen=True)
class FeatureEstimate:
    kind: str
    position: np.ndarray
    existence: float
    axis_var: np.ndarray
    feature_index: int
    pa_index: int


def estimate(state: SlamState, params: SlamParams) -> tuple[AgentState, list[FeatureEstimate]]:
    """MMSE agent state plus all features above the detection threshold."""
    agent = state.agent.mean_state()
    detected = []
    for f in state.features:
        if f.existence_prob > params.detect_threshold:
            detected.append(FeatureEstimate(
                kind=f.kind,
                position=f.mean(),
                existence=f.existence_prob,
                axis_var=f.axis_variances(),
                feature_index=f.feature_index,
                pa_index=f.pa_index,
            ))
    return agent, detected


def init_agent_belief(rp, n_particles: int, vel_scale: float,
                      rng: np.random.Generator) -> AgentBelief:
    """Agent prior at the reference point with unknown velocity."""
    rp = as_point(rp)
    particles = np.zeros((n_particles, 4))
    particles[:, :2] = rp
    particles[:, 2:] = rng.uniform(-vel_scale, vel_scale, (n_particles, 2))
    return AgentBelief(particles, uniform_weights(n_particles))
