"""Mirror-image geometry tying anchors, reflective surfaces and reference points.

A reflective surface is always encoded by the pair (rp, vrp): a reference
point and its mirror image across the surface.  The surface itself is the
perpendicular bisector of that pair, so no separate line parameterization
exists anywhere in the package.  All functions are pure and operate on plain
2-vectors (anything ``np.asarray`` accepts).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Floor plans span tens of meters and range noise is ~0.1 m, so 1e-9 m cleanly
# separates true geometric degeneracy from float noise.
DEGENERACY_TOL = 1e-9


class DegenerateGeometryError(ValueError):
    """A mirror construction is undefined (coincident defining points)."""


def as_point(p) -> np.ndarray:
    """Validate and convert a 2-D point to a float ndarray."""
    arr = np.asarray(p, dtype=float)
    if arr.shape != (2,):
        raise ValueError(f"expected a 2-D point, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"point has non-finite coordinates: {arr!r}")
    return arr


@dataclass(frozen=True)
class SurfaceFrame:
    """Reflective surface given by a reference point and its mirror image."""

    rp: np.ndarray
    vrp: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rp", as_point(self.rp))
        object.__setattr__(self, "vrp", as_point(self.vrp))
        if np.linalg.norm(self.vrp - self.rp) < DEGENERACY_TOL:
            raise DegenerateGeometryError(
                "rp and vrp coincide; the surface normal is undefined"
            )


def surface_normal(frame: SurfaceFrame) -> np.ndarray:
    """Unit normal of the surface, pointing from rp toward vrp."""
    n = frame.vrp - frame.rp
    norm = np.linalg.norm(n)
    if norm < DEGENERACY_TOL:
        raise DegenerateGeometryError("degenerate frame: rp and vrp coincide")
    return n / norm


def _mirror(point: np.ndarray, anchor: np.ndarray, unit_normal: np.ndarray) -> np.ndarray:
    """Mirror `point` across the line through `anchor` with `unit_normal`."""
    return point - 2.0 * np.dot(point - anchor, unit_normal) * unit_normal


def va_from_pa(frame: SurfaceFrame, pa) -> np.ndarray:
    """Virtual anchor: mirror image of the physical anchor across the surface."""
    pa = as_point(pa)
    n = surface_normal(frame)
    mid = 0.5 * (frame.rp + frame.vrp)
    return _mirror(pa, mid, n)


def vrp_from_pa_va(rp, pa, va) -> np.ndarray:
    """Mirror rp across the perpendicular bisector of (pa, va).

    Recovers the virtual reference point of the surface that maps pa to va.
    """
    rp, pa, va = as_point(rp), as_point(pa), as_point(va)
    sep = va - pa
    norm = np.linalg.norm(sep)
    if norm < DEGENERACY_TOL:
        raise DegenerateGeometryError("pa and va coincide; surface is undefined")
    n = sep / norm
    mid = 0.5 * (pa + va)
    return _mirror(rp, mid, n)


def pa_from_vrp_va(frame: SurfaceFrame, va) -> np.ndarray:
    """Physical anchor: mirror image of the virtual anchor across the surface."""
    va = as_point(va)
    n = surface_normal(frame)
    mid = 0.5 * (frame.rp + frame.vrp)
    return _mirror(va, mid, n)


def rsp_position(agent, d: float, phi: float) -> np.ndarray:
    """Reflection sample point at distance d along beam direction phi."""
    agent = as_point(agent)
    if not d > 0:
        raise ValueError(f"beam distance must be positive, got {d}")
    return agent + d * np.array([np.cos(phi), np.sin(phi)])


def vrp_from_two_rsps(rp, rsp1, rsp2) -> np.ndarray:
    """Virtual reference point from two sample points on one surface.

    Closed form of the perpendicularity + collinearity system: equals the
    mirror image of rp across the line through rsp1 and rsp2.
    """
    rp, rsp1, rsp2 = as_point(rp), as_point(rsp1), as_point(rsp2)
    dx = rsp2[0] - rsp1[0]
    dy = rsp2[1] - rsp1[1]
    den = dx * dx + dy * dy
    if den < DEGENERACY_TOL**2:
        raise DegenerateGeometryError("coincident sample points; surface is undefined")
    xr, yr = rp
    x1, y1 = rsp1
    xv = (xr * dx * dx - (xr - 2.0 * x1) * dy * dy + 2.0 * (yr - y1) * dx * dy) / den
    yv = (yr * dy * dy - (yr - 2.0 * y1) * dx * dx + 2.0 * (xr - x1) * dx * dy) / den
    return np.array([xv, yv])


# ----------------------------------------------------------------------------
# Vectorized variants used by the particle machinery. Rows whose defining
# points (nearly) coincide are reported through the returned validity mask
# instead of raising, since noisy particle clouds may contain a few.
# ----------------------------------------------------------------------------

def va_from_pa_batch(rp, vrps: np.ndarray, pa) -> tuple[np.ndarray, np.ndarray]:
    """Mirror one pa across the frames (rp, vrps[i]). Returns (vas, valid)."""
    rp, pa = as_point(rp), as_point(pa)
    vrps = np.asarray(vrps, dtype=float)
    n = vrps - rp
    norm = np.linalg.norm(n, axis=1)
    valid = norm >= DEGENERACY_TOL
    safe = np.where(valid, norm, 1.0)
    n = n / safe[:, None]
    mid = 0.5 * (rp + vrps)
    proj = np.sum((pa - mid) * n, axis=1)
    return pa - 2.0 * proj[:, None] * n, valid


def pa_from_vrp_va_batch(rp, vrps: np.ndarray, vas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mirror vas[i] across the frames (rp, vrps[i]). Returns (pas, valid)."""
    rp = as_point(rp)
    vrps = np.asarray(vrps, dtype=float)
    vas = np.asarray(vas, dtype=float)
    n = vrps - rp
    norm = np.linalg.norm(n, axis=1)
    valid = norm >= DEGENERACY_TOL
    safe = np.where(valid, norm, 1.0)
    n = n / safe[:, None]
    mid = 0.5 * (rp + vrps)
    proj = np.sum((vas - mid) * n, axis=1)
    return vas - 2.0 * proj[:, None] * n, valid


def vrp_from_pa_va_batch(rp, pa, vas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mirror rp across the perpendicular bisectors of (pa, vas[i])."""
    rp, pa = as_point(rp), as_point(pa)
    vas = np.asarray(vas, dtype=float)
    sep = vas - pa
    norm = np.linalg.norm(sep, axis=1)
    valid = norm >= DEGENERACY_TOL
    safe = np.where(valid, norm, 1.0)
    n = sep / safe[:, None]
    mid = 0.5 * (pa + vas)
    proj = np.sum((rp - mid) * n, axis=1)
    return rp - 2.0 * proj[:, None] * n, valid
