"""Post-collision velocity maps and the per-collision energy budget.

Both the impact-direction (n-hat) and the scattering-direction (sigma)
parametrizations of an inelastic hard-sphere collision are implemented,
together with the change of variables connecting them.  All routines
accept a single pair (shape (3,)) or a batch (shape (n, 3)) and conserve
momentum exactly up to floating-point rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePairError, InputError
from .restitution import RestitutionModel, eval_scaled

__all__ = [
    "CollisionOutcome",
    "post_collision_n",
    "post_collision_sigma",
    "energy_loss",
    "sigma_from_n",
]

_UNIT_TOL = 1e-12


@dataclass(frozen=True)
class CollisionOutcome:
    """Velocities after a collision plus the scalars that produced them.

    ``delta_energy`` is the change of |v|^2 + |v_*|^2, always <= 0.
    """

    v_prime: np.ndarray
    v_star_prime: np.ndarray
    impact_speed: np.ndarray | float
    e_used: np.ndarray | float
    delta_energy: np.ndarray | float


def _as_batch(x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        return arr[None, :], True
    return arr, False


def _check_unit(name: str, vec: np.ndarray) -> None:
    norms = np.linalg.norm(vec, axis=-1)
    if np.any(np.abs(norms - 1.0) > _UNIT_TOL):
        raise InputError(f"{name} must be a unit vector (|{name}| - 1 exceeds {_UNIT_TOL})")


def _squeeze(outcome: CollisionOutcome, single: bool) -> CollisionOutcome:
    if not single:
        return outcome
    return CollisionOutcome(
        v_prime=outcome.v_prime[0],
        v_star_prime=outcome.v_star_prime[0],
        impact_speed=float(outcome.impact_speed[0]),
        e_used=float(outcome.e_used[0]),
        delta_energy=float(outcome.delta_energy[0]),
    )


def post_collision_n(v, v_star, n_hat, model: RestitutionModel,
                     lam: float) -> CollisionOutcome:
    """Collision outcome in the impact-direction parametrization.

    v' = v - (1+e)/2 (u . n) n with e evaluated at the rescaled impact
    speed |u . n|.
    """
    v, single = _as_batch(v)
    v_star, _ = _as_batch(v_star)
    n_hat, _ = _as_batch(n_hat)
    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(v_star))):
        raise InputError("velocities must be finite")
    _check_unit("n_hat", n_hat)

    u = v - v_star
    g = np.einsum("ij,ij->i", u, n_hat)
    impact = np.abs(g)
    e = np.asarray(eval_scaled(model, lam, impact))
    q = (0.5 * (1.0 + e) * g)[:, None] * n_hat
    delta = -0.5 * impact**2 * (1.0 - e**2)
    return _squeeze(CollisionOutcome(v - q, v_star + q, impact, e, delta), single)


def post_collision_sigma(v, v_star, sigma, model: RestitutionModel,
                         lam: float) -> CollisionOutcome:
    """Collision outcome in the scattering-direction parametrization.

    v' = v - (1+e)/2 (u - |u| sigma)/2 with e evaluated at the rescaled
    impact speed |u| sqrt((1 - u_hat . sigma)/2).  Pairs with u = 0 have
    no defined scattering direction and raise DegeneratePairError.
    """
    v, single = _as_batch(v)
    v_star, _ = _as_batch(v_star)
    sigma, _ = _as_batch(sigma)
    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(v_star))):
        raise InputError("velocities must be finite")
    _check_unit("sigma", sigma)

    u = v - v_star
    speed = np.linalg.norm(u, axis=-1)
    if np.any(speed == 0.0):
        raise DegeneratePairError("zero relative velocity: scattering direction undefined")
    # |u| sqrt((1 - u_hat.sigma)/2) = |u - |u| sigma| / 2, which stays
    # accurate at grazing incidence where the dot product cancels.
    w = u - speed[:, None] * sigma
    impact = 0.5 * np.linalg.norm(w, axis=-1)
    e = np.asarray(eval_scaled(model, lam, impact))
    q = (0.5 * (1.0 + e))[:, None] * w / 2.0
    delta = -0.5 * impact**2 * (1.0 - e**2)
    return _squeeze(CollisionOutcome(v - q, v_star + q, impact, e, delta), single)


def energy_loss(v, v_star, sigma, e_used) -> np.ndarray | float:
    """Energy change -|u|^2 (1 - u_hat . sigma)/4 (1 - e^2) of one collision.

    Matches |v'|^2 + |v'_*|^2 - |v|^2 - |v_*|^2 of post_collision_sigma
    when called with the e it used.
    """
    e = np.asarray(e_used, dtype=float)
    if np.any(e <= 0.0) or np.any(e > 1.0):
        raise InputError("e_used must lie in (0, 1]")
    v, single = _as_batch(v)
    v_star, _ = _as_batch(v_star)
    sigma, _ = _as_batch(sigma)
    u = v - v_star
    speed2 = np.einsum("ij,ij->i", u, u)
    udotsig = np.einsum("ij,ij->i", u, sigma)
    out = -(speed2 - np.sqrt(speed2) * udotsig) / 4.0 * (1.0 - e**2)
    return float(out[0]) if single else out


def sigma_from_n(u_hat, n_hat) -> np.ndarray:
    """Map an impact direction to the equivalent scattering direction.

    sigma = u_hat - 2 (u_hat . n) n; the two collision parametrizations
    agree under this change of variables.
    """
    u_hat, single = _as_batch(u_hat)
    n_hat, _ = _as_batch(n_hat)
    _check_unit("u_hat", u_hat)
    _check_unit("n_hat", n_hat)
    dot = np.einsum("ij,ij->i", u_hat, n_hat)
    sigma = u_hat - 2.0 * dot[:, None] * n_hat
    return sigma[0] if single else sigma
