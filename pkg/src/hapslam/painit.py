"""Anchor position initialization from first-slot TOAs and VRP priors.

Each TOA beyond the smallest one hypothesizes a virtual anchor on a circle
around the reference point.  Mapping a virtual-anchor cloud through a correct
VRP prior mirrors the circle onto a circle through the true anchor; wrong
priors smear it.  Where three or more hypothesized constraints coincide, the
anchor is.  Because mirroring is an isometry, each constraint is equivalent
to a range to a known center (a VRP mean, or the reference point itself for
the direct return), which the fusion exploits to verify and sharpen the
grid-level coincidence.
"""

from __future__ import annotations

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT

from .active import GaussianVrp
from .beliefs import KIND_PA, FeatureBelief, uniform_weights
from .engine import SlamParams
from .geometry import as_point, pa_from_vrp_va_batch
from .scenario import MeasurementFrame, NoiseModel


class EmptyFrameError(ValueError):
    """No TOA measurements available for the anchor being initialized."""


def _circle_cloud(center: np.ndarray, radius: float, sigma: float, n: int,
                  rng: np.random.Generator) -> np.ndarray:
    theta = rng.uniform(0.0, 2.0 * np.pi, n)
    r = radius + rng.standard_normal(n) * sigma
    r = np.abs(r)
    return center + r[:, None] * np.column_stack([np.cos(theta), np.sin(theta)])


def va_candidates(rp, frame: MeasurementFrame, k: int, n_particles: int,
                  toa_sigma: float, rng: np.random.Generator) -> list[np.ndarray]:
    """One uniform circle cloud per TOA of anchor k, smallest TOA removed.

    The smallest TOA is the direct return from the anchor itself, which is
    geometrically shorter than every bounce.
    """
    rp = as_point(rp)
    toas = np.sort(np.asarray(frame.per_pa[k], dtype=float))
    if toas.size == 0:
        raise EmptyFrameError(f"no measurements for anchor {k} at t={frame.t}")
    clouds = []
    for tau in toas[1:]:
        clouds.append(_circle_cloud(rp, SPEED_OF_LIGHT * tau, toa_sigma,
                                    n_particles, rng))
    return clouds


def pa_candidates(va_cloud: np.ndarray, priors: list[GaussianVrp], rp,
                  rng: np.random.Generator) -> list[np.ndarray]:
    """Mirror a virtual-anchor cloud through each VRP prior, one cloud per prior."""
    rp = as_point(rp)
    va_cloud = np.asarray(va_cloud, dtype=float)
    n = va_cloud.shape[0]
    out = []
    for prior in priors:
        vrps = rng.multivariate_normal(prior.mean, prior.cov, size=n)
        pas, valid = pa_from_vrp_va_batch(rp, vrps, va_cloud)
        out.append(pas[valid])
    return out


def _range_centers(priors: list[GaussianVrp], rp: np.ndarray,
                   toa_sigma: float) -> tuple[np.ndarray, np.ndarray]:
    """Range-constraint centers and tolerances: the reference point (direct
    return) followed by the prior means (bounces)."""
    centers = np.vstack([rp] + [p.mean for p in priors])
    smear = np.array([np.sqrt(max(np.linalg.eigvalsh(p.cov).max(), 0.0))
                      for p in priors])
    # direct return: pure TOA noise; bounces: TOA noise plus the prior smear
    tols = np.concatenate([[3.0 * toa_sigma],
                           3.0 * np.hypot(toa_sigma, smear)]) + 0.25
    return centers, tols


def _explained_candidates(
    positions: np.ndarray,
    priors: list[GaussianVrp],
    ranges: np.ndarray,
    rp: np.ndarray,
    toa_sigma: float,
    slack: float = 0.0,
):
    """Consistency of candidate anchor positions against the full TOA set.

    Mirroring is an isometry, so a position explains a bounce range R through
    prior m exactly when it sits at distance R from that prior's mean, and it
    explains the direct return when it sits at that range from the reference
    point.  Ranges are greedily matched to distinct centers; a tight match is
    worth (1 - ratio)^2 so a sloppy accidental match (for instance a clutter
    range inside a wide prior's tolerance) cannot outvote three tight ones.
    `slack` widens the tolerances, for positions only known to cell
    resolution.  Returned matches are (range index, center index) with center
    0 the reference point.
    """
    positions = np.atleast_2d(positions)
    n_pos = len(positions)
    centers, tols = _range_centers(priors, rp, toa_sigma)
    tols = tols + slack
    preds = np.linalg.norm(positions[:, None, :] - centers[None, :, :], axis=2)
    ratios = np.abs(preds[:, None, :] - ranges[None, :, None]) / tols[None, None, :]

    counts = np.zeros(n_pos, dtype=int)
    scores = np.zeros(n_pos)
    matches: list[list[tuple[int, int]]] = []
    n_l, n_m = len(ranges), len(centers)
    for p in range(n_pos):
        flat = np.argsort(ratios[p], axis=None)
        used_l, used_m = set(), set()
        matched = []
        for f in flat:
            l, m = divmod(int(f), n_m)
            if ratios[p, l, m] >= 1.0:
                break
            if l in used_l or m in used_m:
                continue
            used_l.add(l)
            used_m.add(m)
            counts[p] += 1
            scores[p] += (1.0 - ratios[p, l, m]) ** 2
            matched.append((l, m))
            if len(used_l) == n_l or len(used_m) == n_m:
                break
        matches.append(matched)
    return counts, scores, matches


def _trilaterate(start: np.ndarray, centers: np.ndarray, tols: np.ndarray,
                 ranges: np.ndarray, matched: list[tuple[int, int]]) -> np.ndarray:
    """Gauss-Newton range multilateration against the matched centers."""
    p = start.astype(float).copy()
    c = np.array([centers[m] for _, m in matched])
    targets = np.array([ranges[l] for l, _ in matched])
    w = 1.0 / np.array([tols[m] for _, m in matched]) ** 2
    for _ in range(8):
        diff = p - c
        dist = np.maximum(np.linalg.norm(diff, axis=1), 1e-9)
        res = dist - targets
        jac = diff / dist[:, None]
        a = jac.T @ (w[:, None] * jac)
        b = jac.T @ (w * res)
        try:
            delta = np.linalg.solve(a, b)
        except np.linalg.LinAlgError:
            break
        p = p - delta
        if np.linalg.norm(delta) < 1e-6:
            break
    return p


def fuse_pa_candidates(
    clouds_per_va: list[list[np.ndarray]],
    grid_cell: float,
    roi_radius: float,
    rp,
    n_particles: int,
    rng: np.random.Generator,
    priors: list[GaussianVrp] | None = None,
    ranges: np.ndarray | None = None,
    toa_sigma: float = 0.1,
) -> FeatureBelief | None:
    """Coincidence fusion of anchor candidate clouds on a grid over the ROI.

    Each virtual-anchor hypothesis deposits a density field (its clouds across
    all priors, spread one cell against quantization); cells where at least
    two hypotheses exceed a clutter floor propose anchor locations, scored by
    the product of the hypothesis densities.  When the priors and the sorted
    range set are supplied, proposals are verified: a candidate must explain
    at least three ranges through distinct centers (the reference point for
    the direct return, the prior means for bounces), the leaders are sharpened
    by multilateration over their matched constraints, and the best-explaining
    refined position wins.  The belief resamples the matched clouds local to
    the winner.  Returns None when nothing qualifies.
    """
    rp = as_point(rp)
    lo = rp - roi_radius
    n_cells = int(np.ceil(2.0 * roi_radius / grid_cell))
    floor = 0.1 / n_cells**2

    def _cell_index(cloud: np.ndarray):
        cells = np.floor((cloud - lo) / grid_cell).astype(np.int64)
        inside = np.all((cells >= 0) & (cells < n_cells), axis=1)
        return cells, inside

    fields = []
    for clouds in clouds_per_va:
        field = np.zeros((n_cells, n_cells))
        total = sum(len(c) for c in clouds if c.size)
        if total == 0:
            continue
        for cloud in clouds:
            if cloud.size == 0:
                continue
            cells, inside = _cell_index(cloud)
            cells = cells[inside]
            np.add.at(field, (cells[:, 0], cells[:, 1]), 1.0 / total)
        # one-cell box spread so a ring straddling a cell edge still supports
        # its neighbors
        padded = np.zeros_like(field)
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                padded += np.roll(np.roll(field, dx, axis=0), dy, axis=1)
        fields.append(padded)
    if not fields:
        return None

    support = sum(f > floor for f in fields)
    score = sum(np.log(f + floor) for f in fields)

    matched_pairs = None
    if priors is not None and ranges is not None and len(ranges) >= 3:
        ranges = np.asarray(ranges, dtype=float)
        hot = support >= 2  # the direct-return constraint is not on the grid
        if not np.any(hot):
            return None
        hot_idx = np.argwhere(hot)
        cells_pos = lo + (hot_idx + 0.5) * grid_cell
        counts, scores, match_lists = _explained_candidates(
            cells_pos, priors, ranges, rp, toa_sigma,
            slack=1.5 * grid_cell)  # cell centers are only grid-accurate
        qualified = (counts >= 3) & (scores >= 1.5)
        if not np.any(qualified):
            return None
        order = np.lexsort((-score[hot_idx[:, 0], hot_idx[:, 1]], -scores))
        # sharpen the leading coarse candidates by multilateration over their
        # matched constraints, then re-verify at full tightness
        centers, tols = _range_centers(priors, rp, toa_sigma)
        best_refined = None
        for o in order[:40]:
            if not qualified[o]:
                continue
            refined = _trilaterate(cells_pos[o], centers, tols, ranges,
                                   match_lists[o])
            cnt, sc, ml = _explained_candidates(refined, priors, ranges, rp,
                                                toa_sigma)
            if cnt[0] < 3 or sc[0] < 1.5:
                continue
            if best_refined is None or sc[0] > best_refined[0]:
                best_refined = (sc[0], refined, ml[0])
        if best_refined is None:
            return None
        _, center, matched_pairs = best_refined
    else:
        hot = support >= 3
        if not np.any(hot):
            return None
        masked = np.where(hot, score, -np.inf)
        best = np.unravel_index(int(np.argmax(masked)), masked.shape)
        center = lo + (np.asarray(best) + 0.5) * grid_cell

    # the belief is built from the clouds local to the winner: the clouds of
    # matched bounce constraints when verification ran, every cloud otherwise
    if matched_pairs is not None:
        local_clouds = [clouds_per_va[l - 1][m - 1] for l, m in matched_pairs
                        if l >= 1 and m >= 1 and l - 1 < len(clouds_per_va)
                        and m - 1 < len(clouds_per_va[l - 1])]
    else:
        local_clouds = [c for clouds in clouds_per_va for c in clouds if c.size]
    points = []
    for cloud in local_clouds:
        near = cloud[np.linalg.norm(cloud - center, axis=1) <= 1.5]
        if near.size:
            points.append(near)
    if not points:
        # matched constraints may be direct-return heavy; fall back to a tight
        # synthetic cloud at the multilaterated position
        spread = rng.standard_normal((n_particles, 2)) * (2.0 * toa_sigma)
        particles = center + spread
    else:
        points = np.vstack(points)
        idx = rng.choice(len(points), size=n_particles)
        particles = points[idx]
    return FeatureBelief(
        kind=KIND_PA,
        particles=particles,
        weights=uniform_weights(n_particles),
        existence_prob=0.999,
        feature_index=1,
        pa_index=0,  # caller assigns
    )


def initialize_pa(
    rp,
    frame: MeasurementFrame,
    k: int,
    priors: list[GaussianVrp],
    noise: NoiseModel,
    params: SlamParams,
    rng: np.random.Generator,
    grid_cell: float = 1.0,
) -> FeatureBelief:
    """Full initialization of one anchor's position belief at the first slot.

    With VRP priors and enough coinciding constraints the fused belief is
    returned (existence 0.999).  Without usable evidence the fallback is
    uninformed with existence 0.5: the circle of the smallest TOA when no
    priors exist (the anchor lies on its own direct-return circle), or the
    union of the transformed candidate clouds otherwise.
    """
    rp = as_point(rp)
    n = params.n_particles
    toas = np.asarray(frame.per_pa[k], dtype=float)
    if toas.size == 0:
        raise EmptyFrameError(f"no measurements for anchor {k} at t={frame.t}")

    def _uninformed_circle() -> FeatureBelief:
        cloud = _circle_cloud(rp, SPEED_OF_LIGHT * toas.min(), noise.toa_sigma, n, rng)
        return FeatureBelief(KIND_PA, cloud, uniform_weights(n), 0.5, 1, pa_index=k + 1)

    if not priors:
        return _uninformed_circle()

    vas = va_candidates(rp, frame, k, n, noise.toa_sigma, rng)
    clouds_per_va = [pa_candidates(cloud, priors, rp, rng) for cloud in vas]

    if len(vas) >= 2:
        fused = fuse_pa_candidates(clouds_per_va, grid_cell, noise.roi_radius,
                                   rp, n, rng, priors=priors,
                                   ranges=SPEED_OF_LIGHT * np.sort(toas),
                                   toa_sigma=noise.toa_sigma)
        if fused is not None:
            return FeatureBelief(KIND_PA, fused.particles, fused.weights,
                                 fused.existence_prob, 1, pa_index=k + 1)

    union = np.vstack([c for clouds in clouds_per_va for c in clouds if c.size])
    if union.size == 0:
        return _uninformed_circle()
    idx = rng.choice(len(union), size=n)
    return FeatureBelief(KIND_PA, union[idx], uniform_weights(n), 0.5, 1,
                         pa_index=k + 1)
