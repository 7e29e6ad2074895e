"""Particle ensembles on the unit 3-torus and their initial conditions.

An ensemble carries N equal-weight particles (weight 1/N, total mass 1).
Initial velocity laws always have their empirical mean subtracted so the
total momentum vanishes exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import seeding
from .errors import InputError

__all__ = [
    "ParticleEnsemble",
    "Maxwellian",
    "TwoTemperature",
    "Modulated",
    "InitSpec",
    "init_ensemble",
    "merge",
]


@dataclass
class ParticleEnsemble:
    """Positions in [0,1)^3 and velocities of N unit-total-mass particles."""

    positions: np.ndarray
    velocities: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float64)
        self.velocities = np.ascontiguousarray(self.velocities, dtype=np.float64)
        if self.positions.shape != self.velocities.shape or self.positions.ndim != 2 \
                or self.positions.shape[1] != 3:
            raise InputError("positions and velocities must both have shape (n, 3)")
        if np.any(self.positions < 0.0) or np.any(self.positions >= 1.0):
            raise InputError("positions must lie in [0, 1)^3")

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def particle_weight(self) -> float:
        return 1.0 / self.n

    @property
    def mass(self) -> float:
        return 1.0

    def copy(self) -> "ParticleEnsemble":
        return ParticleEnsemble(self.positions.copy(), self.velocities.copy(), self.time)


@dataclass(frozen=True)
class Maxwellian:
    """Gaussian velocities with per-component variance theta."""

    theta: float = 1.0

    def __post_init__(self):
        if not (self.theta > 0.0):
            raise InputError(f"maxwellian init requires theta > 0, got {self.theta}")


@dataclass(frozen=True)
class TwoTemperature:
    """Bimodal mixture: a `fraction` of particles at theta1, the rest at theta2."""

    theta1: float
    theta2: float
    fraction: float = 0.5

    def __post_init__(self):
        if not (self.theta1 > 0.0 and self.theta2 > 0.0):
            raise InputError("two_temperature init requires positive temperatures")
        if not (0.0 < self.fraction < 1.0):
            raise InputError(f"fraction must lie in (0, 1), got {self.fraction}")


@dataclass(frozen=True)
class Modulated:
    """Maxwellian velocities with density 1 + epsilon cos(2 pi k.x) in space."""

    theta: float = 1.0
    epsilon: float = 0.0
    k: tuple[int, int, int] = (1, 0, 0)

    def __post_init__(self):
        if not (self.theta > 0.0):
            raise InputError(f"modulated init requires theta > 0, got {self.theta}")
        if not (0.0 <= self.epsilon < 1.0):
            raise InputError(f"epsilon must lie in [0, 1), got {self.epsilon}")
        if all(c == 0 for c in self.k):
            raise InputError("modulated init requires a nonzero wave vector")


InitSpec = Maxwellian | TwoTemperature | Modulated


def _modulated_positions(rng: np.random.Generator, n: int, epsilon: float,
                         k: tuple[int, int, int]) -> np.ndarray:
    """Rejection-sample positions with density proportional to 1 + eps cos(2 pi k.x)."""
    kvec = np.asarray(k, dtype=float)
    out = np.empty((n, 3))
    filled = 0
    while filled < n:
        batch = max(2 * (n - filled), 1024)
        x = rng.random((batch, 3))
        accept_p = (1.0 + epsilon * np.cos(2.0 * np.pi * (x @ kvec))) / (1.0 + epsilon)
        keep = x[rng.random(batch) < accept_p]
        take = min(keep.shape[0], n - filled)
        out[filled:filled + take] = keep[:take]
        filled += take
    return out


def init_ensemble(spec: InitSpec, n: int, seed: int) -> ParticleEnsemble:
    """Draw an initial ensemble for the requested law.

    The empirical mean velocity is subtracted exactly, so the returned
    ensemble has vanishing total momentum.
    """
    if n < 1:
        raise InputError("n must be >= 1")
    rng = seeding.stream(seed, seeding.PHASE_INIT, 0)

    if isinstance(spec, Modulated) and spec.epsilon > 0.0:
        positions = _modulated_positions(rng, n, spec.epsilon, spec.k)
    else:
        positions = rng.random((n, 3))

    if isinstance(spec, (Maxwellian, Modulated)):
        velocities = np.sqrt(spec.theta) * rng.standard_normal((n, 3))
    elif isinstance(spec, TwoTemperature):
        n1 = int(round(spec.fraction * n))
        n1 = min(max(n1, 1), n - 1)
        velocities = np.empty((n, 3))
        velocities[:n1] = np.sqrt(spec.theta1) * rng.standard_normal((n1, 3))
        velocities[n1:] = np.sqrt(spec.theta2) * rng.standard_normal((n - n1, 3))
    else:
        raise InputError(f"unknown init spec {spec!r}")

    velocities -= velocities.mean(axis=0)
    return ParticleEnsemble(positions=positions, velocities=velocities, time=0.0)


def merge(a: ParticleEnsemble, b: ParticleEnsemble) -> ParticleEnsemble:
    """Concatenate two ensembles into one (weights renormalize to 1/(na+nb))."""
    return ParticleEnsemble(
        positions=np.concatenate([a.positions, b.positions]),
        velocities=np.concatenate([a.velocities, b.velocities]),
        time=a.time,
    )
