"""Cross-time feature identity resolution with variance-gated refinement.

When a feature estimated at the current step lands within the similarity
threshold of a feature from the previous step, the two are the same physical
feature; the belief with the smaller scalar variance wins so a noisy pass can
never degrade a well-localized feature.
"""

from __future__ import annotations

import numpy as np

from .beliefs import KIND_PA, FeatureBelief
from .geometry import as_point


def similarity(p1, p2) -> float:
    """Euclidean distance between two feature means."""
    return float(np.linalg.norm(as_point(p1) - as_point(p2)))


def _compatible(a: FeatureBelief, b: FeatureBelief) -> bool:
    if a.kind != b.kind:
        return False
    if a.kind == KIND_PA and a.pa_index != b.pa_index:
        return False
    return True


def refine(
    legacy: list[FeatureBelief],
    current: list[FeatureBelief],
    delta_sim: float,
) -> list[FeatureBelief]:
    """Greedy nearest-pair matching under delta_sim; keep the tighter belief.

    Matched pairs contribute one output feature: the particle set of whichever
    side has the smaller scalar variance (ties keep the current side), with
    the current side's existence probability and indices, so detection and
    pruning dynamics keep evolving.  Unmatched features pass through.
    """
    if delta_sim <= 0:
        raise ValueError("delta_sim must be positive")
    pairs = []
    if legacy and current:
        lmeans = np.array([f.mean() for f in legacy])
        cmeans = np.array([f.mean() for f in current])
        dist = np.linalg.norm(lmeans[:, None, :] - cmeans[None, :, :], axis=2)
        for i, j in np.argwhere(dist < delta_sim):
            if _compatible(legacy[i], current[j]):
                pairs.append((dist[i, j], int(i), int(j)))
    pairs.sort(key=lambda t: t[0])

    used_legacy: set[int] = set()
    used_current: set[int] = set()
    replacements: dict[int, FeatureBelief] = {}
    for _, i, j in pairs:
        if i in used_legacy or j in used_current:
            continue
        used_legacy.add(i)
        used_current.add(j)
        lf, cf = legacy[i], current[j]
        if cf.position_variance() > lf.position_variance():
            replacements[j] = FeatureBelief(
                kind=cf.kind,
                particles=lf.particles.copy(),
                weights=lf.weights.copy(),
                existence_prob=cf.existence_prob,
                feature_index=cf.feature_index,
                pa_index=cf.pa_index,
            )

    out = [replacements.get(j, cf) for j, cf in enumerate(current)]
    out.extend(lf for i, lf in enumerate(legacy) if i not in used_legacy)
    return out
