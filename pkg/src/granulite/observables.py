"""Moment extraction, spatial modes, equilibrium metrics, and rate fits.

All routines are read-only over ensembles and deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import maxwell

from .ensemble import ParticleEnsemble
from .errors import InputError

__all__ = [
    "MomentReport",
    "SpectralFit",
    "moments",
    "stretched_tail_moment",
    "spatial_mode",
    "maxwellian_distance",
    "fit_exponential_rate",
]


@dataclass
class MomentReport:
    """Time-stamped observables of one ensemble."""

    time: float
    mass: float
    momentum: np.ndarray
    energy: float
    temperature: float
    dissipation: "object | None" = None      # DissipationEstimate when scheduled
    mode_amplitudes: dict = field(default_factory=dict)
    tail_moment: float | None = None
    energy_std_error: float | None = None    # set by time-averaged reports


@dataclass(frozen=True)
class SpectralFit:
    """Exponential-rate regression result; negative rate means decay."""

    rate: float
    intercept: float
    r_squared: float
    window: tuple[float, float]

    def __post_init__(self):
        if not (self.window[1] > self.window[0]):
            raise InputError("fit window must have t_end > t_start")


def moments(ensemble: ParticleEnsemble) -> MomentReport:
    """Weighted empirical mass, momentum, energy, and temperature.

    Temperature convention: theta = (E - |P|^2) / 3 for unit total mass,
    so a Maxwellian with temperature theta has per-component variance
    theta.
    """
    w = ensemble.particle_weight
    v = ensemble.velocities
    momentum = w * v.sum(axis=0)
    energy = float(w * np.einsum("ij,ij->", v, v))
    theta = (energy - float(momentum @ momentum)) / 3.0
    return MomentReport(time=ensemble.time, mass=ensemble.n * w,
                        momentum=momentum, energy=energy,
                        temperature=max(theta, 0.0))


def stretched_tail_moment(ensemble: ParticleEnsemble, A: float, p: float = 1.5,
                          log: bool = False) -> float:
    """Weighted mean of exp(A |v|^p), computed in log space.

    With ``log=True`` the natural log of the moment is returned, which
    stays finite even when the moment itself would overflow.
    """
    if not (A > 0.0):
        raise InputError("A must be positive")
    speeds = np.linalg.norm(ensemble.velocities, axis=1)
    expo = A * speeds**p
    m = float(expo.max())
    log_moment = m + float(np.log(np.mean(np.exp(expo - m))))
    return log_moment if log else float(np.exp(log_moment))


def spatial_mode(ensemble: ParticleEnsemble, k, field_kind: str = "density",
                 allow_zero: bool = False) -> complex:
    """Weighted Fourier amplitude sum_i w_i f_i exp(-2 pi i k.x_i).

    ``field_kind`` selects f_i = 1 (density) or |v_i|^2 (energy).  The
    zero mode (= total mass for the density field) is rejected unless
    ``allow_zero`` is set.
    """
    kvec = np.asarray(k, dtype=float)
    if np.all(kvec == 0) and not allow_zero:
        raise InputError("wave vector must be nonzero")
    phase = np.exp(-2j * np.pi * (ensemble.positions @ kvec))
    if field_kind == "density":
        weights = np.ones(ensemble.n)
    elif field_kind == "energy":
        weights = np.einsum("ij,ij->i", ensemble.velocities, ensemble.velocities)
    else:
        raise InputError(f"unknown field {field_kind!r}")
    return complex(ensemble.particle_weight * np.sum(weights * phase))


def maxwellian_distance(ensemble: ParticleEnsemble, n_bins: int = 64) -> float:
    """L1 distance of the speed histogram to the fitted Maxwellian speed law.

    The reference is the Maxwell speed density at the ensemble's own
    fitted temperature, integrated per bin; the result lies in [0, 2].
    """
    if ensemble.n < 1000:
        raise InputError("maxwellian_distance needs at least 1000 particles")
    rep = moments(ensemble)
    vc = ensemble.velocities - rep.momentum[None, :]
    speeds = np.linalg.norm(vc, axis=1)
    theta = max(float(np.mean(speeds**2)) / 3.0, 1e-300)
    edges = np.linspace(0.0, float(speeds.max()) * (1.0 + 1e-12), n_bins + 1)
    counts, _ = np.histogram(speeds, bins=edges)
    p_hat = counts / ensemble.n
    cdf = maxwell.cdf(edges, scale=np.sqrt(theta))
    p_ref = np.diff(cdf)
    tail = 1.0 - cdf[-1]
    return float(np.abs(p_hat - p_ref).sum() + tail)


def fit_exponential_rate(series, window: tuple[float, float]) -> SpectralFit:
    """Least-squares fit of log y against t on a window.

    ``series`` is an iterable of (t, y) with y > 0 inside the window.
    Returns the slope as the rate (negative = decay).
    """
    pts = np.asarray(list(series), dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise InputError("series must be (t, y) pairs")
    t0, t1 = window
    mask = (pts[:, 0] >= t0) & (pts[:, 0] <= t1)
    t = pts[mask, 0]
    y = pts[mask, 1]
    if t.size < 5:
        raise InputError(f"need at least 5 points in window, got {t.size}")
    if np.any(y <= 0.0):
        raise InputError("nonpositive values in fit window; clip at the noise floor first")
    z = np.log(y)
    A = np.vstack([t, np.ones_like(t)]).T
    (slope, intercept), res, _, _ = np.linalg.lstsq(A, z, rcond=None)
    tot = float(np.sum((z - z.mean()) ** 2))
    ssr = float(res[0]) if res.size else float(np.sum((A @ [slope, intercept] - z) ** 2))
    r2 = 1.0 if tot == 0.0 else max(0.0, 1.0 - ssr / tot)
    return SpectralFit(rate=float(slope), intercept=float(intercept),
                       r_squared=r2, window=(float(t0), float(t1)))
