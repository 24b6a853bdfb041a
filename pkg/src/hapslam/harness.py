"""Experiment runner: scan-to-priors pipeline, per-seed runs, result emission.

Modes: hybrid (active scan seeds the map and anchor init), passive-only
(annular anchor priors, no VRP priors) and active-only (the first-slot VRP
estimates are the whole output; no localization).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT

from . import active, engine, painit
from .beliefs import KIND_VRP, FeatureBelief, uniform_weights
from .config import RunConfig, load_config
from .geometry import rsp_position
from .metrics import mae, ospa
from .scenario import generate_active_scan, ground_truth_features, \
    generate_trajectory, measurements_at

MODES = ("hybrid", "passive-only", "active-only")

TRAJECTORY_HEADER = "t,true_x,true_y,est_x,est_y,err"
FEATURES_HEADER = "t,pa_index,feature_index,kind,est_x,est_y,existence,var"
METRICS_HEADER = "t,mae_cum,ospa"


class InvalidModeError(ValueError):
    pass


# ---------------------------------------------------------------------------
# active scan -> wall groups -> VRP priors
# ---------------------------------------------------------------------------

def group_rsps(rsps: list[active.Rsp], rp, min_group: int = 3) -> list[list[active.Rsp]]:
    """Attribute sample points to surfaces by sequential RANSAC line fitting.

    Inlier tolerance scales with each point's own range std so far, poorly
    resolved walls still group.  Points supporting no line are dropped.
    """
    remaining = list(rsps)
    rng_pos = {id(r): rsp_position(rp, r.d_mean, r.phi) for r in rsps}
    groups = []
    while len(remaining) >= min_group:
        best = None
        for i in range(len(remaining)):
            for j in range(i + 1, len(remaining)):
                pi, pj = rng_pos[id(remaining[i])], rng_pos[id(remaining[j])]
                d = pj - pi
                norm = np.linalg.norm(d)
                if norm < 1e-9:
                    continue
                n = np.array([-d[1], d[0]]) / norm
                inliers = []
                for r in remaining:
                    tol = 3.0 * np.sqrt(max(r.d_var, 0.0)) + 0.3
                    if abs(np.dot(rng_pos[id(r)] - pi, n)) <= tol:
                        inliers.append(r)
                if best is None or len(inliers) > len(best):
                    best = inliers
        if best is None or len(best) < min_group:
            break
        groups.append(best)
        chosen = {id(r) for r in best}
        remaining = [r for r in remaining if id(r) not in chosen]
    return groups


def vrp_priors_from_scan(rsps: list[active.Rsp], rp) -> list[active.GaussianVrp]:
    """Fuse each wall group's pairwise VRP solutions into one Gaussian prior.

    The lowest-variance sample point of a group is the reference of the
    pairwise combinations.
    """
    priors = []
    for group in group_rsps(rsps, rp):
        group = sorted(group, key=lambda r: r.d_var)
        ref, rest = group[0], group[1:]
        solutions = []
        for other in rest:
            try:
                solutions.append(active.taylor_vrp_pair(rp, ref, other))
            except active.DegenerateGeometryError:
                continue
        if solutions:
            priors.append(active.fuse_vrp_solutions(solutions))
    return priors


def _vrp_feature_from_prior(prior: active.GaussianVrp, index: int, n: int,
                            rng: np.random.Generator) -> FeatureBelief:
    particles = rng.multivariate_normal(prior.mean, prior.cov, size=n)
    return FeatureBelief(KIND_VRP, particles, uniform_weights(n), 0.999,
                         feature_index=index, pa_index=0)


# ---------------------------------------------------------------------------
# single-seed pipeline
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    mode: str
    seed: int
    trajectory_rows: list  # (t, true_x, true_y, est_x, est_y, err)
    feature_rows: list  # (t, pa_index, feature_index, kind, x, y, existence, var)
    metric_rows: list  # (t, mae_cum, ospa)
    summary: dict


def _truth_sets(cfg: RunConfig):
    truths = ground_truth_features(cfg.scenario)
    pa_truth = np.array([t.pa for t in truths])
    vrp_truth = truths[0].vrps
    return pa_truth, vrp_truth


def _map_estimates(detected: list[engine.FeatureEstimate]) -> np.ndarray:
    if not detected:
        return np.zeros((0, 2))
    return np.array([f.position for f in detected])


def run_single(cfg: RunConfig, mode: str, seed: int,
               n_steps: int | None = None) -> RunResult:
    if mode not in MODES:
        raise InvalidModeError(f"mode must be one of {MODES}, got {mode!r}")
    params = cfg.slam
    rng = np.random.default_rng(seed)
    scn = cfg.scenario
    trajectory = generate_trajectory(scn)
    if n_steps is not None:
        trajectory = trajectory[:n_steps]
    rp = scn.rp
    pa_truth, vrp_truth = _truth_sets(cfg)
    truth_all = np.vstack([pa_truth, vrp_truth])

    priors: list[active.GaussianVrp] = []
    if mode in ("hybrid", "active-only"):
        rsps = generate_active_scan(scn, cfg.signal, rp, cfg.n_beams, rng)
        priors = vrp_priors_from_scan(rsps, rp)

    traj_rows, feat_rows, metric_rows = [], [], []
    abs_errors = []

    def record(t, true_pos, est_pos, detected):
        if est_pos is None:
            err = float("nan")
            ex, ey = float("nan"), float("nan")
        else:
            err = float(np.linalg.norm(est_pos - true_pos))
            ex, ey = float(est_pos[0]), float(est_pos[1])
            abs_errors.append(err)
        traj_rows.append((t, float(true_pos[0]), float(true_pos[1]), ex, ey, err))
        for f in detected:
            feat_rows.append((t, f.pa_index, f.feature_index, f.kind,
                              float(f.position[0]), float(f.position[1]),
                              float(f.existence), float(np.sum(f.axis_var))))
        mae_cum = float(np.mean(abs_errors)) if abs_errors else float("nan")
        map_err = ospa(_map_estimates(detected), truth_all)
        metric_rows.append((t, mae_cum, map_err))

    if mode == "active-only":
        detected = [
            engine.FeatureEstimate(KIND_VRP, p.mean, 0.999, np.diag(p.cov),
                                   feature_index=i + 2, pa_index=0)
            for i, p in enumerate(priors)
        ]
        for t, state in enumerate(trajectory):
            record(t, state.pos, None, detected)
        summary = _summary(cfg, mode, seed, metric_rows, len(detected))
        return RunResult(mode, seed, traj_rows, feat_rows, metric_rows, summary)

    frames = [measurements_at(scn, cfg.noise, s.pos, t, rng)
              for t, s in enumerate(trajectory)]

    features: list[FeatureBelief] = []
    for i, prior in enumerate(priors):
        features.append(_vrp_feature_from_prior(prior, i + 2, params.n_particles, rng))
    next_index = 2 + len(priors)
    init_priors = priors if mode == "hybrid" else []
    for k in range(len(scn.pas)):
        features.append(painit.initialize_pa(rp, frames[0], k, init_priors,
                                             cfg.noise, params, rng))

    vel_scale = scn.step_length / scn.sample_period
    state = engine.SlamState(
        agent=engine.init_agent_belief(rp, params.n_particles, vel_scale, rng),
        features=features,
        rp=rp,
        sample_period=scn.sample_period,
        next_feature_index=next_index,
    )

    agent_est, detected = engine.estimate(state, params)
    record(0, trajectory[0].pos, agent_est.pos, detected)
    for t in range(1, len(trajectory)):
        state = engine.step(state, frames[t], params, rng)
        agent_est, detected = engine.estimate(state, params)
        record(t, trajectory[t].pos, agent_est.pos, detected)

    summary = _summary(cfg, mode, seed, metric_rows,
                       len([f for f in state.features
                            if f.existence_prob > params.detect_threshold]))
    return RunResult(mode, seed, traj_rows, feat_rows, metric_rows, summary)


def _summary(cfg: RunConfig, mode: str, seed: int, metric_rows, n_detected: int) -> dict:
    final = metric_rows[-1] if metric_rows else (0, float("nan"), float("nan"))
    return {
        "mode": mode,
        "seed": seed,
        "n_steps": len(metric_rows),
        "final_mae": final[1],
        "final_ospa": final[2],
        "n_features_detected": n_detected,
        "config": cfg.raw,
    }


# ---------------------------------------------------------------------------
# emission
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".10g")
    return str(value)


def _write_csv(path: Path, header: str, rows) -> None:
    lines = [header]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")


def emit_results(result: RunResult, out_dir) -> dict:
    """Write trajectory.csv, features.csv, metrics.csv and summary.json."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "trajectory.csv", TRAJECTORY_HEADER, result.trajectory_rows)
        _write_csv(out / "features.csv", FEATURES_HEADER, result.feature_rows)
        _write_csv(out / "metrics.csv", METRICS_HEADER, result.metric_rows)
        (out / "summary.json").write_text(
            json.dumps(result.summary, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write results under {out}: {exc}") from exc
    return {name: out / name for name in
            ("trajectory.csv", "features.csv", "metrics.csv", "summary.json")}


def _aggregate(results: list[RunResult], out_dir: Path) -> None:
    """Mean and std of the metric curves across seeds, per step."""
    n_steps = min(len(r.metric_rows) for r in results)
    mae_mat = np.array([[r.metric_rows[t][1] for t in range(n_steps)] for r in results])
    ospa_mat = np.array([[r.metric_rows[t][2] for t in range(n_steps)] for r in results])
    rows = []
    for t in range(n_steps):
        rows.append((t,
                     float(np.mean(mae_mat[:, t])), float(np.std(mae_mat[:, t])),
                     float(np.mean(ospa_mat[:, t])), float(np.std(ospa_mat[:, t]))))
    _write_csv(out_dir / "aggregate_metrics.csv",
               "t,mae_mean,mae_std,ospa_mean,ospa_std", rows)


def run_experiment(config_path, mode: str, seeds, out_dir,
                   particles: int | None = None,
                   steps: int | None = None) -> list[RunResult]:
    """Run one experiment per seed, write per-seed files and the aggregate."""
    if mode not in MODES:
        raise InvalidModeError(f"mode must be one of {MODES}, got {mode!r}")
    cfg = load_config(config_path)
    if particles is not None:
        from dataclasses import replace
        cfg = RunConfig(cfg.scenario, cfg.noise, cfg.signal, cfg.n_beams,
                        replace(cfg.slam, n_particles=particles), cfg.raw)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = []
    for seed in seeds:
        result = run_single(cfg, mode, int(seed), n_steps=steps)
        emit_results(result, out / f"seed_{int(seed)}")
        results.append(result)
    if results:
        _aggregate(results, out)
    return results
