"""Time-stepping particle solver: free transport on the torus, majorant
accept-reject collision sampling per spatial cell, and a Brownian velocity
thermostat.

Normalization: total mass 1 on the unit-volume torus; an unordered pair
in a cell of volume V collides at rate 4 pi |v_i - v_j| w / V with
w = 1/N, so the per-particle collision frequency matches the convolution
of the empirical density with 4 pi |.|.

Reproducibility: every stochastic phase draws from a stream keyed by
(master seed, phase, step index), so a resumed run continues on exactly
the trajectory of the uninterrupted one, and results do not depend on
how cells are distributed over workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import seeding
from .ensemble import InitSpec, Maxwellian, ParticleEnsemble, init_ensemble
from .errors import ConfigError, InputError
from .restitution import RestitutionModel, eval_scaled, expansion_params

__all__ = [
    "SimConfig",
    "CellGrid",
    "CollisionStats",
    "CollisionRecord",
    "Simulation",
    "ObservableSchedule",
    "run",
    "transport_step",
    "thermostat_step",
    "collision_step",
    "build_grid",
    "auto_dt",
    "mean_relative_speed",
]

# Majorant safety factor on the exact per-cell pairwise speed bound.
_UMAX_SAFETY = 1.5
# A cell asking for more than this many candidates per pair signals a dt
# far above the collision scale.
_CANDIDATE_PAIR_RATIO_LIMIT = 10.0


@dataclass(frozen=True)
class SimConfig:
    """Complete description of one simulation scenario."""

    lam: float
    model: RestitutionModel
    n_particles: int
    cell_counts: tuple[int, int, int] = (1, 1, 1)
    dt: float | None = None
    thermostat_on: bool = True
    momentum_projection: bool = True
    seed: int = 0
    t_end: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.lam <= 1.0):
            raise ConfigError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.n_particles < 2:
            raise ConfigError("n_particles must be >= 2")
        if len(self.cell_counts) != 3 or any(c < 1 for c in self.cell_counts):
            raise ConfigError(f"cell_counts must be three positive integers, got {self.cell_counts}")
        if self.dt is not None and not (self.dt > 0.0):
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not (self.t_end > 0.0):
            raise ConfigError(f"t_end must be positive, got {self.t_end}")

    @property
    def gamma(self) -> float:
        """Heat-bath exponent; tied to the restitution law's expansion."""
        return expansion_params(self.model).gamma

    @property
    def heat_bath_rate(self) -> float:
        return self.lam**self.gamma if self.lam > 0.0 else 0.0

    @property
    def homogeneous(self) -> bool:
        return tuple(self.cell_counts) == (1, 1, 1)


@dataclass
class CellGrid:
    """Cell decomposition of the ensemble for one collision step."""

    cell_counts: tuple[int, int, int]
    cell_index: np.ndarray   # cell id per particle
    order: np.ndarray        # particle indices sorted by cell id
    counts: np.ndarray       # particles per cell
    starts: np.ndarray       # offsets of each cell in `order`
    u_max: np.ndarray        # majorant relative speed per cell

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.cell_counts))

    @property
    def cell_volume(self) -> float:
        return 1.0 / self.n_cells


def mean_relative_speed(velocities: np.ndarray) -> float:
    """Deterministic estimate of the mean pairwise speed |v_i - v_j|.

    Uses the fixed derangement i -> i + n/2 (mod n); unbiased for
    exchangeable particle order and reproducible without an RNG.
    """
    n = velocities.shape[0]
    if n < 2:
        return 0.0
    shift = max(n // 2, 1)
    d = velocities - np.roll(velocities, shift, axis=0)
    return float(np.mean(np.linalg.norm(d, axis=1)))


def auto_dt(velocities: np.ndarray) -> float:
    """Default time step: the largest power of two below a tenth of the
    initial mean free time.

    A power of two keeps time = step * dt exactly representable, which
    lets a checkpoint recover dt from (time, step) without rounding.
    """
    rate = 4.0 * np.pi * mean_relative_speed(velocities)
    if rate <= 0.0:
        raise ConfigError("cannot choose dt automatically: all velocities equal")
    return 2.0 ** math.floor(math.log2(0.1 / rate))


def transport_step(ensemble: ParticleEnsemble, dt: float) -> None:
    """Free streaming on the torus: x <- (x + v dt) mod 1, in place."""
    if not (dt > 0.0):
        raise InputError("dt must be positive")
    x = ensemble.positions
    x += ensemble.velocities * dt
    np.mod(x, 1.0, out=x)
    # np.mod can return 1.0 for tiny negative inputs; fold those back.
    x[x >= 1.0] = 0.0


def thermostat_step(ensemble: ParticleEnsemble, lam: float, gamma: float,
                    dt: float, momentum_projection: bool,
                    rng: np.random.Generator) -> None:
    """Brownian velocity kicks of variance 2 lam^gamma dt per component.

    With momentum projection the ensemble-mean kick is subtracted, so the
    total momentum is conserved exactly; the energy injection rate is then
    6 lam^gamma (1 - 1/N) per unit mass instead of 6 lam^gamma.
    """
    if lam < 0.0:
        raise InputError("lambda must be nonnegative")
    if lam == 0.0:
        return
    kick = np.sqrt(2.0 * lam**gamma * dt) * rng.standard_normal(ensemble.velocities.shape)
    if momentum_projection:
        kick -= kick.mean(axis=0)
    ensemble.velocities += kick


def _segment_reduce(values: np.ndarray, starts: np.ndarray, counts: np.ndarray,
                    op) -> np.ndarray:
    """Per-segment ufunc reduction that tolerates empty segments."""
    n = values.shape[0]
    idx = np.minimum(starts[:-1], max(n - 1, 0))
    out = op.reduceat(values, idx, axis=0)
    out[counts == 0] = 0.0
    return out


def build_grid(ensemble: ParticleEnsemble, cell_counts: tuple[int, int, int]) -> CellGrid:
    """Sort particles into cells and compute per-cell collision majorants.

    The majorant is 1.5x the exact pairwise bound 2 max_i |v_i - vbar_c|,
    so the accept-reject probability |u|/u_max never exceeds 2/3.
    """
    c1, c2, c3 = cell_counts
    n_cells = c1 * c2 * c3
    if n_cells == 1:
        cell_index = np.zeros(ensemble.n, dtype=np.int64)
        order = np.arange(ensemble.n, dtype=np.int64)
        counts = np.array([ensemble.n], dtype=np.int64)
        starts = np.array([0, ensemble.n])
        d = ensemble.velocities - ensemble.velocities.mean(axis=0)
        max_dev = np.sqrt(np.einsum("ij,ij->i", d, d).max())
        u_max = np.array([_UMAX_SAFETY * 2.0 * max_dev])
        return CellGrid(cell_counts=tuple(cell_counts), cell_index=cell_index,
                        order=order, counts=counts, starts=starts, u_max=u_max)

    scaled = np.floor(ensemble.positions * np.array([c1, c2, c3])).astype(np.int64)
    np.clip(scaled, 0, np.array([c1 - 1, c2 - 1, c3 - 1]), out=scaled)
    cell_index = (scaled[:, 0] * c2 + scaled[:, 1]) * c3 + scaled[:, 2]
    order = np.argsort(cell_index, kind="stable")
    counts = np.bincount(cell_index, minlength=n_cells)
    starts = np.concatenate([[0], np.cumsum(counts)])

    v_sorted = ensemble.velocities[order]
    sums = _segment_reduce(v_sorted, starts, counts, np.add)
    means = sums / np.maximum(counts, 1)[:, None]
    d = v_sorted - means[cell_index[order]]
    dev = np.sqrt(np.einsum("ij,ij->i", d, d))
    max_dev = _segment_reduce(dev, starts, counts, np.maximum)
    u_max = _UMAX_SAFETY * 2.0 * max_dev
    return CellGrid(cell_counts=tuple(cell_counts), cell_index=cell_index,
                    order=order, counts=counts, starts=starts, u_max=u_max)


@dataclass
class CollisionRecord:
    """Pre/post state of every accepted collision in one step."""

    i: np.ndarray
    j: np.ndarray
    v_i_before: np.ndarray
    v_j_before: np.ndarray
    sigma: np.ndarray
    impact_speed: np.ndarray
    e_used: np.ndarray
    delta_energy: np.ndarray  # unweighted change of |v_i|^2 + |v_j|^2


@dataclass
class CollisionStats:
    n_candidates: int
    n_collisions: int
    delta_energy: float       # weighted change of the ensemble energy
    record: CollisionRecord | None = None


def collision_step(ensemble: ParticleEnsemble, grid: CellGrid,
                   model: RestitutionModel, lam: float, dt: float,
                   rng: np.random.Generator, record: bool = False) -> CollisionStats:
    """One majorant accept-reject collision sweep over all cells.

    Candidate pairs per cell follow the no-time-counter count
    n(n-1)/2 * 4 pi u_max * (w/V) * dt (fractional part resolved by a
    Bernoulli draw).  Candidates are processed in draw order; a candidate
    whose particles were touched by an earlier candidate sees the updated
    velocities, exactly as in a sequential sweep.
    """
    w = ensemble.particle_weight
    counts = grid.counts
    pairs = 0.5 * counts * (counts - 1.0)
    rate = pairs * 4.0 * np.pi * grid.u_max * (w / grid.cell_volume) * dt
    m_frac = rate - np.floor(rate)
    m_cells = np.floor(rate).astype(np.int64)
    m_cells += rng.random(m_cells.shape) < m_frac

    bad = m_cells > _CANDIDATE_PAIR_RATIO_LIMIT * np.maximum(pairs, 1.0)
    if np.any(bad):
        cell = int(np.argmax(bad))
        raise ConfigError(
            f"candidate count {int(m_cells[cell])} exceeds 10x the pair count "
            f"in cell {cell}; decrease dt")

    active = np.nonzero(m_cells > 0)[0]
    m_active = m_cells[active]
    n_cand = int(m_active.sum())
    if n_cand == 0:
        return CollisionStats(0, 0, 0.0, _empty_record() if record else None)

    cell_of = np.repeat(active, m_active)
    n_c = counts[cell_of]
    r1 = (rng.random(n_cand) * n_c).astype(np.int64)
    r2 = (r1 + 1 + (rng.random(n_cand) * (n_c - 1)).astype(np.int64)) % n_c
    base = grid.starts[cell_of]
    p = grid.order[base + r1]
    q = grid.order[base + r2]
    sigma = rng.standard_normal((n_cand, 3))
    norms = np.linalg.norm(sigma, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    sigma /= norms
    u_accept = rng.random(n_cand)
    u_max_cand = grid.u_max[cell_of]

    vel = ensemble.velocities
    n_coll = 0
    delta_total = 0.0
    rec_chunks: list[CollisionRecord] = []
    pending = np.arange(n_cand, dtype=np.int64)
    first = np.empty(ensemble.n, dtype=np.int64)
    while pending.size:
        # A candidate runs as soon as it is the earliest pending draw for
        # both of its particles; this reproduces strict draw order.
        first.fill(n_cand)
        np.minimum.at(first, p[pending], pending)
        np.minimum.at(first, q[pending], pending)
        runnable = (first[p[pending]] == pending) & (first[q[pending]] == pending)
        k = pending[runnable]

        u = vel[p[k]] - vel[q[k]]
        speed = np.linalg.norm(u, axis=1)
        accepted = u_accept[k] * u_max_cand[k] < speed
        ka = k[accepted]
        if ka.size:
            ia, ja = p[ka], q[ka]
            ua = u[accepted]
            sa = speed[accepted]
            sg = sigma[ka]
            wv = ua - sa[:, None] * sg
            impact = 0.5 * np.sqrt(np.einsum("ij,ij->i", wv, wv))
            e = np.asarray(eval_scaled(model, lam, impact))
            dq = (0.5 * (1.0 + e))[:, None] * wv / 2.0
            if record:
                rec_chunks.append(CollisionRecord(
                    i=ia.copy(), j=ja.copy(),
                    v_i_before=vel[ia].copy(), v_j_before=vel[ja].copy(),
                    sigma=sg.copy(), impact_speed=impact.copy(), e_used=e.copy(),
                    delta_energy=-0.5 * impact**2 * (1.0 - e * e)))
            vel[ia] -= dq
            vel[ja] += dq
            n_coll += int(ka.size)
            delta_total += float(np.sum(-0.5 * impact**2 * (1.0 - e * e)))
        pending = pending[~runnable]

    rec = None
    if record:
        rec = _concat_records(rec_chunks)
    return CollisionStats(n_candidates=n_cand, n_collisions=n_coll,
                          delta_energy=w * delta_total, record=rec)


def _empty_record() -> CollisionRecord:
    z3 = np.zeros((0, 3))
    z = np.zeros(0)
    zi = np.zeros(0, dtype=np.int64)
    return CollisionRecord(zi, zi, z3, z3, z3, z, z, z)


def _concat_records(chunks: list[CollisionRecord]) -> CollisionRecord:
    if not chunks:
        return _empty_record()
    return CollisionRecord(*(np.concatenate([getattr(c, f) for c in chunks])
                             for f in ("i", "j", "v_i_before", "v_j_before",
                                       "sigma", "impact_speed", "e_used",
                                       "delta_energy")))


class Simulation:
    """Owns one evolving ensemble; steps use (seed, phase, step)-keyed RNG.

    Splitting per step: transport -> collisions -> thermostat (transport
    is skipped on a (1,1,1) grid, where it only permutes positions).
    """

    def __init__(self, config: SimConfig, ensemble: ParticleEnsemble | None = None,
                 step_index: int = 0):
        self.config = config
        if ensemble is None:
            ensemble = init_ensemble(Maxwellian(theta=1.0), config.n_particles, config.seed)
        if ensemble.n != config.n_particles:
            raise ConfigError("ensemble size does not match config.n_particles")
        self.ensemble = ensemble
        self.step_index = step_index
        self.dt = config.dt if config.dt is not None else auto_dt(ensemble.velocities)
        self.last_stats: CollisionStats | None = None

    @property
    def time(self) -> float:
        return self.step_index * self.dt

    def mean_collision_time(self) -> float:
        rate = 4.0 * np.pi * mean_relative_speed(self.ensemble.velocities)
        return 1.0 / rate if rate > 0.0 else np.inf

    def step(self, record: bool = False) -> CollisionStats:
        cfg = self.config
        if not cfg.homogeneous:
            transport_step(self.ensemble, self.dt)
        grid = build_grid(self.ensemble, cfg.cell_counts)
        rng = seeding.stream(cfg.seed, seeding.PHASE_COLLIDE, self.step_index)
        stats = collision_step(self.ensemble, grid, cfg.model, cfg.lam,
                               self.dt, rng, record=record)
        if cfg.thermostat_on and cfg.lam > 0.0:
            rng_t = seeding.stream(cfg.seed, seeding.PHASE_THERMOSTAT, self.step_index)
            thermostat_step(self.ensemble, cfg.lam, cfg.gamma, self.dt,
                            cfg.momentum_projection, rng_t)
        self.step_index += 1
        self.ensemble.time = self.time
        self.last_stats = stats
        return stats

    def run_steps(self, n_steps: int) -> None:
        for _ in range(n_steps):
            self.step()


@dataclass(frozen=True)
class ObservableSchedule:
    """Report cadence for run(): moment rows every period, with the
    density amplitude of each listed wave vector attached."""

    moments_period: float
    modes: tuple[tuple[int, int, int], ...] = ()

    def __post_init__(self):
        if not (self.moments_period > 0.0):
            raise ConfigError("moments_period must be positive")


def run(config: SimConfig, schedule: ObservableSchedule,
        init: InitSpec | None = None):
    """Time-step a scenario to t_end, collecting scheduled moment reports.

    Returns (reports, final ensemble).  Identical (config, seed) produce
    identical trajectories.
    """
    from .observables import moments, spatial_mode

    ens = init_ensemble(init if init is not None else Maxwellian(theta=1.0),
                        config.n_particles, config.seed)
    sim = Simulation(config, ens)
    report_every = max(1, round(schedule.moments_period / sim.dt))

    def collect():
        rep = moments(sim.ensemble)
        for k in schedule.modes:
            rep.mode_amplitudes[k] = spatial_mode(sim.ensemble, k, "density")
        return rep

    reports = [collect()]
    n_steps = int(np.ceil(config.t_end / sim.dt - 1e-12))
    while sim.step_index < n_steps:
        sim.step()
        if sim.step_index % report_every == 0:
            reports.append(collect())
    if sim.step_index % report_every != 0:
        reports.append(collect())
    return reports, sim.ensemble
