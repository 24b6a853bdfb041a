"""OFDM echo model for active wall sounding.

Covers the monostatic reflection channel, its range information bound, a
single-path maximum-likelihood range estimator that attains the bound, and
first-order propagation of range uncertainty into a Gaussian belief over the
virtual reference point of the sounded surface.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT

from .geometry import DegenerateGeometryError, as_point

FOUR_PI_CUBED = (4.0 * np.pi) ** 3


class GrazingIncidenceError(ValueError):
    """Incidence at or beyond 90 degrees has no reflection model."""


class NoEchoPeakError(RuntimeError):
    """The ranging objective shows no peak above the noise floor."""


@dataclass(frozen=True)
class SignalConfig:
    """Sounding waveform and reflection-strength parameters.

    noise_var is the total per-subcarrier complex noise power.
    """

    carrier_freq: float
    subcarrier_spacing: float
    num_subcarriers: int
    noise_var: float
    rcs_gamma: float = 1.0
    rcs_eta: float = 0.2

    def __post_init__(self):
        if self.carrier_freq <= 0 or self.subcarrier_spacing <= 0:
            raise ValueError("carrier_freq and subcarrier_spacing must be positive")
        if self.num_subcarriers < 2:
            raise ValueError("need at least two subcarriers")
        if self.noise_var <= 0 or self.rcs_gamma <= 0 or self.rcs_eta <= 0:
            raise ValueError("noise_var, rcs_gamma and rcs_eta must be positive")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq

    @property
    def bandwidth(self) -> float:
        return self.num_subcarriers * self.subcarrier_spacing


@dataclass(frozen=True)
class Rsp:
    """One reflection sample point: beam angle, range estimate, range variance."""

    phi: float
    d_mean: float
    d_var: float

    def __post_init__(self):
        if not self.d_mean > 0:
            raise ValueError("d_mean must be positive")
        # d_var 0 is allowed so the noise-free limit stays expressible.
        if self.d_var < 0:
            raise ValueError("d_var must be nonnegative")


@dataclass(frozen=True)
class GaussianVrp:
    """Gaussian belief over a virtual reference point."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", as_point(self.mean))
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (2, 2):
            raise ValueError("cov must be 2x2")
        if not np.allclose(cov, cov.T, atol=1e-10):
            raise ValueError("cov must be symmetric")
        if np.linalg.eigvalsh(cov).min() < -1e-12:
            raise ValueError("cov must be positive semidefinite")
        object.__setattr__(self, "cov", cov)


def _amplitude(cfg: SignalConfig, rcs: float) -> float:
    return cfg.wavelength * np.sqrt(rcs) / FOUR_PI_CUBED**0.5


def reflection_gain(cfg: SignalConfig, d: float, rcs: float, n: int) -> complex:
    """Complex channel gain of the echo on subcarrier n (1-based)."""
    if not d > 0:
        raise ValueError("distance must be positive")
    if not 1 <= n <= cfg.num_subcarriers:
        raise ValueError(f"subcarrier index {n} outside 1..{cfg.num_subcarriers}")
    b = _amplitude(cfg, rcs)
    phase = 2.0 * np.pi * (n - cfg.num_subcarriers / 2.0) * cfg.subcarrier_spacing \
        * 2.0 * d / SPEED_OF_LIGHT
    return b / d**2 * np.exp(-1j * phase)


def _gain_vector(cfg: SignalConfig, d: float, rcs: float) -> np.ndarray:
    n = np.arange(1, cfg.num_subcarriers + 1)
    b = _amplitude(cfg, rcs)
    phase = 2.0 * np.pi * (n - cfg.num_subcarriers / 2.0) * cfg.subcarrier_spacing \
        * 2.0 * d / SPEED_OF_LIGHT
    return b / d**2 * np.exp(-1j * phase)


def rcs_of_incidence(cfg: SignalConfig, psi: float) -> float:
    """Reflection strength gamma*cos(psi)^(2*eta) at incidence angle psi."""
    if not abs(psi) < np.pi / 2:
        raise GrazingIncidenceError(f"incidence {psi} rad is at or beyond grazing")
    return cfg.rcs_gamma * np.cos(psi) ** (2.0 * cfg.rcs_eta)


def simulate_echo(cfg: SignalConfig, d: float, rcs: float, rng) -> np.ndarray:
    """Noisy echo vector: channel gain plus circular complex Gaussian noise."""
    if not d > 0:
        raise ValueError("distance must be positive")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    ns = cfg.num_subcarriers
    noise = (rng.standard_normal(ns) + 1j * rng.standard_normal(ns)) \
        * np.sqrt(cfg.noise_var / 2.0)
    return _gain_vector(cfg, d, rcs) + noise


def snr(cfg: SignalConfig, d: float, rcs: float) -> float:
    """Per-subcarrier echo SNR at range d."""
    if not d > 0:
        raise ValueError("distance must be positive")
    return cfg.wavelength**2 * rcs / (FOUR_PI_CUBED * d**4 * cfg.noise_var)


def distance_crlb(cfg: SignalConfig, d: float, rcs: float) -> float:
    """Large-N_s range variance bound 3c^2 / (8 pi^2 B^2 N_s SNR)."""
    if not d > 0:
        raise ValueError("distance must be positive")
    b = cfg.bandwidth
    return 3.0 * SPEED_OF_LIGHT**2 / (
        8.0 * np.pi**2 * b**2 * cfg.num_subcarriers * snr(cfg, d, rcs)
    )


def exact_fisher_info(cfg: SignalConfig, d: float, rcs: float) -> float:
    """Exact range Fisher information of the echo, by direct summation.

    Keeps both the phase-slope term and the 1/d^2 amplitude-derivative term,
    so it serves as the oracle against which distance_crlb is an
    approximation.
    """
    if not d > 0:
        raise ValueError("distance must be positive")
    ns = cfg.num_subcarriers
    n = np.arange(1, ns + 1)
    b2 = cfg.wavelength**2 * rcs / FOUR_PI_CUBED
    phase_slope = 16.0 * np.pi**2 * (n - ns / 2.0) ** 2 \
        * cfg.subcarrier_spacing**2 / SPEED_OF_LIGHT**2
    return 2.0 / cfg.noise_var * float(np.sum(b2 / d**4 * (4.0 / d**2 + phase_slope)))


def _objective_terms(echo: np.ndarray, omega: np.ndarray, d: float):
    e = np.exp(1j * omega * d)
    s0 = np.sum(echo * e)
    s1 = np.sum(1j * omega * echo * e)
    s2 = np.sum(-(omega**2) * echo * e)
    j0 = abs(s0) ** 2
    j1 = 2.0 * np.real(s1 * np.conj(s0))
    j2 = 2.0 * np.real(s2 * np.conj(s0)) + 2.0 * abs(s1) ** 2
    return j0, j1, j2


def estimate_distance(
    echo: np.ndarray,
    cfg: SignalConfig,
    rcs: float = 1.0,
    d_min: float = 0.5,
    d_max: float = 500.0,
    max_iter: int = 20,
    tol: float = 1e-6,
    peak_threshold: float = 3.0,
) -> tuple[float, float]:
    """Single-path ML range estimate from an echo vector.

    Maximizes the delay periodogram |sum_n r_n exp(+j w_n d)|^2 on a coarse
    grid (quarter of the natural range resolution c/2B, so Newton refinement
    starts inside the main lobe), then refines by Newton steps.  Returns
    (d_hat, var) with var = distance_crlb at d_hat for the given rcs.
    """
    echo = np.asarray(echo)
    ns = cfg.num_subcarriers
    if echo.shape != (ns,):
        raise ValueError(f"echo must have length {ns}, got shape {echo.shape}")
    n = np.arange(1, ns + 1)
    omega = 4.0 * np.pi * (n - ns / 2.0) * cfg.subcarrier_spacing / SPEED_OF_LIGHT

    grid = np.arange(d_min, d_max, SPEED_OF_LIGHT / (4.0 * cfg.bandwidth))
    power = np.abs(np.exp(1j * np.outer(grid, omega)) @ echo) ** 2
    if power.max() < peak_threshold * np.median(power):
        raise NoEchoPeakError("ranging objective has no peak above the noise floor")

    d = float(grid[int(np.argmax(power))])
    for _ in range(max_iter):
        _, j1, j2 = _objective_terms(echo, omega, d)
        if j2 >= 0.0:
            break
        d_new = min(max(d - j1 / j2, d_min), d_max)
        step = abs(d_new - d)
        d = d_new
        if step < tol:
            break
    return d, distance_crlb(cfg, d, rcs)


def _taylor_constants(rp: np.ndarray, mu1: np.ndarray, mu2: np.ndarray):
    """Quotient-rule gradient constants of the two-point closed form."""
    xr, yr = rp
    mx1, my1 = mu1
    mx2, my2 = mu2
    dx = mx2 - mx1
    dy = my2 - my1
    a0 = xr * dx**2 - (xr - 2 * mx1) * dy**2 + 2 * (yr - my1) * dy * dx
    a1 = -2 * xr * dx + 2 * dy**2 - 2 * (yr - my1) * dy
    a2 = 2 * xr * dx + 2 * (yr - my1) * dy
    a3 = 2 * (xr - 2 * mx1) * dy + 2 * dx * (-my2 - yr + 2 * my1)
    a4 = -2 * (xr - 2 * mx1) * dy + 2 * (yr - my1) * dx
    b0 = dx**2 + dy**2
    bvec = np.array([-2 * dx, 2 * dx, -2 * dy, 2 * dy])
    c0 = yr * dy**2 - (yr - 2 * my1) * dx**2 + 2 * (xr - mx1) * dy * dx
    c1 = 2 * (yr - 2 * my1) * dx + 2 * dy * (-mx2 - xr + 2 * mx1)
    c2 = -2 * (yr - 2 * my1) * dx + 2 * (xr - mx1) * dy
    c3 = -2 * yr * dy + 2 * dx**2 - 2 * (xr - mx1) * dx
    c4 = 2 * yr * dy + 2 * (xr - mx1) * dx
    avec = np.array([a1, a2, a3, a4])
    cvec = np.array([c1, c2, c3, c4])
    return a0, avec, b0, bvec, c0, cvec


def taylor_vrp_pair(rp, rsp1: Rsp, rsp2: Rsp) -> GaussianVrp:
    """Gaussian VRP from two noisy sample points via first-order expansion.

    The beams are assumed to emanate from rp.  Means are the polar sample
    positions; per-coordinate variances are the radial variances projected on
    the axes (sigma^2 cos^2 phi, sigma^2 sin^2 phi), with x/y cross terms set
    to zero.
    """
    rp = as_point(rp)
    mu1 = rp + rsp1.d_mean * np.array([np.cos(rsp1.phi), np.sin(rsp1.phi)])
    mu2 = rp + rsp2.d_mean * np.array([np.cos(rsp2.phi), np.sin(rsp2.phi)])
    a0, avec, b0, bvec, c0, cvec = _taylor_constants(rp, mu1, mu2)
    if b0 < 1e-12:
        raise DegenerateGeometryError("sample point means coincide")
    qx = (avec * b0 - a0 * bvec) / b0**2
    qy = (cvec * b0 - c0 * bvec) / b0**2
    q = np.column_stack([qx, qy])
    w_var = np.array([
        rsp1.d_var * np.cos(rsp1.phi) ** 2,
        rsp2.d_var * np.cos(rsp2.phi) ** 2,
        rsp1.d_var * np.sin(rsp1.phi) ** 2,
        rsp2.d_var * np.sin(rsp2.phi) ** 2,
    ])
    cov = q.T @ (w_var[:, None] * q)
    cov = 0.5 * (cov + cov.T)
    return GaussianVrp(np.array([a0 / b0, c0 / b0]), cov)


def fuse_vrp_solutions(solutions: list[GaussianVrp]) -> GaussianVrp:
    """Combine pairwise VRP solutions: average means, scale summed covariances."""
    if not solutions:
        raise ValueError("need at least one VRP solution to fuse")
    m = len(solutions)
    mean = np.mean([s.mean for s in solutions], axis=0)
    cov = np.sum([s.cov for s in solutions], axis=0) / m**2
    return GaussianVrp(mean, cov)

