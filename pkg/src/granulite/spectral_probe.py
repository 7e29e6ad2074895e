"""Energy-mode relaxation: measurement by linear response, first-order
prediction by quadrature, steady-state prediction by moment balance, and
power-law fits of the rate against the diffusion parameter.

The first-order machinery rests on one reduction, derived in
docs/derivations.md: for small lambda the dissipation kernel approaches
zeta_0(r^2) = beta r^p with (beta, p) determined by the restitution law,
the stationary temperature theta_bar balances (1/2) beta m_p(theta) = 6
(m_p = Gaussian relative-speed moment), and the energy eigenvalue obeys
mu = -lambda^gamma I_0(G_0, phi_0) / E(phi_0) = -p lambda^gamma / theta_bar.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq, curve_fit
from scipy.special import gamma as gamma_fn
from scipy.special import hyp1f1

from . import seeding
from .collision_oracle import KAPPA, DissipationEstimate, QuadratureSpec, dissipation, psi_e_batch
from .dsmc import SimConfig, Simulation
from .ensemble import Maxwellian, ParticleEnsemble, init_ensemble
from .errors import ConfigError, ConvergenceError, InputError, MeasurementQualityError
from .observables import MomentReport, SpectralFit, fit_exponential_rate, moments, stretched_tail_moment
from .quadrature import adaptive_quad, gauss_legendre
from .restitution import Constant, ExpansionParams, RestitutionModel, expansion_params

__all__ = [
    "EnergyEigenfunctionSpec",
    "MuEstimate",
    "FirstOrderKernel",
    "first_order_kernel",
    "gaussian_rel_speed_moment",
    "predict_theta_bar",
    "theta_bar_for_model",
    "predict_theta_inf",
    "closure_dissipation",
    "closure_mu",
    "build_phi0",
    "phi0_checks",
    "predict_mu_first_order",
    "mu_first_order",
    "steady_state",
    "measure_mu",
    "scaling_fit",
    "haff_cooling_probe",
]


# ---------------------------------------------------------------------------
# First-order kernels and moment balance


@dataclass(frozen=True)
class FirstOrderKernel:
    """Small-lambda dissipation kernel zeta_0(r^2) = beta * r^p."""

    beta: float
    p: float
    gamma: float


def first_order_kernel(model: RestitutionModel) -> FirstOrderKernel:
    """Leading dissipation kernel of a restitution family as lambda -> 0.

    Power-law families give beta = KAPPA a/(4+gamma), p = 3+gamma.  The
    constant family e0 = 1 - lambda has no impact-speed dependence; its
    kernel is beta = 2 pi, p = 3 with the lambda-exponent gamma = 1.
    """
    if isinstance(model, Constant):
        return FirstOrderKernel(beta=2.0 * np.pi, p=3.0, gamma=1.0)
    exp = expansion_params(model)
    return FirstOrderKernel(beta=KAPPA * exp.a / (4.0 + exp.gamma),
                            p=3.0 + exp.gamma, gamma=exp.gamma)


def gaussian_rel_speed_moment(theta: float, p: float, scheme: str = "gamma") -> float:
    """E|u|^p for u ~ Normal(0, 2 theta I3).

    ``scheme='gamma'`` uses the closed Gamma-function form; ``'radial'``
    integrates the Maxwell speed density numerically (independent check).
    """
    if scheme == "gamma":
        return (4.0 * theta) ** (p / 2.0) * gamma_fn((p + 3.0) / 2.0) / gamma_fn(1.5)
    if scheme == "radial":
        sc = np.sqrt(2.0 * theta)
        def f(s):
            return np.sqrt(2.0 / np.pi) * s**2 / sc**3 * np.exp(-s**2 / (2 * sc**2)) * s**p
        return adaptive_quad(f, 0.0, 16.0 * sc, rel_tol=1e-12)
    raise InputError(f"unknown scheme {scheme!r}")


def _theta_bar_from_kernel(kernel: FirstOrderKernel, scheme: str = "gamma") -> float:
    """Root of the limiting energy balance (1/2) beta m_p(theta) = 6.

    Solved by bisection to 1e-10; the left side is strictly increasing
    in theta.
    """
    def bal(th):
        return 0.5 * kernel.beta * gaussian_rel_speed_moment(th, kernel.p, scheme) - 6.0
    lo, hi = 1e-8, 1.0
    while bal(hi) < 0.0:
        hi *= 2.0
        if hi > 1e8:
            raise ConvergenceError("energy balance has no root below theta = 1e8")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if bal(mid) > 0.0:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-10 * hi:
            break
    return 0.5 * (lo + hi)


def predict_theta_bar(expansion: ExpansionParams, scheme: str = "gamma") -> float:
    """Limiting stationary temperature for a power-law restitution family."""
    kernel = FirstOrderKernel(beta=KAPPA * expansion.a / (4.0 + expansion.gamma),
                              p=3.0 + expansion.gamma, gamma=expansion.gamma)
    return _theta_bar_from_kernel(kernel, scheme)


def theta_bar_for_model(model: RestitutionModel, scheme: str = "gamma") -> float:
    """Limiting stationary temperature, dispatching on the model family."""
    return _theta_bar_from_kernel(first_order_kernel(model), scheme)


# ---------------------------------------------------------------------------
# Moment-closure oracle at finite lambda


def closure_dissipation(model: RestitutionModel, lam: float, theta: float) -> float:
    """D(theta) = (1/2) E_theta[psi_{e_lam}(|u|^2)] under a Maxwellian closure."""
    sc = np.sqrt(2.0 * theta)
    s, w = gauss_legendre(0.0, 14.0 * sc, 240)
    dens = np.sqrt(2.0 / np.pi) * s**2 / sc**3 * np.exp(-s**2 / (2.0 * sc**2))
    return 0.5 * float(np.sum(w * dens * psi_e_batch(model, lam, s * s)))


def predict_theta_inf(model: RestitutionModel, lam: float) -> float:
    """Stationary temperature at finite lambda from the moment balance
    D(theta) = 6 lambda^gamma with the full (unexpanded) kernel."""
    if not (lam > 0.0):
        raise InputError("predict_theta_inf requires lambda > 0")
    gam = expansion_params(model).gamma
    target = 6.0 * lam**gam
    f = lambda th: closure_dissipation(model, lam, th) - target
    hi = 1.0
    while f(hi) < 0.0:
        hi *= 2.0
        if hi > 1e8:
            raise ConvergenceError("no moment-balance root below theta = 1e8")
    return float(brentq(f, 1e-10, hi, xtol=1e-13, rtol=1e-12))


def closure_mu(model: RestitutionModel, lam: float) -> float:
    """Energy-relaxation rate -D'(theta_inf)/3 of the closed moment ODE.

    This is the finite-lambda analogue of the first-order prediction and
    serves as the independent oracle for the measured rate.
    """
    if lam == 0.0:
        return 0.0
    th = predict_theta_inf(model, lam)
    h = 1e-5 * th
    dp = (closure_dissipation(model, lam, th + h)
          - closure_dissipation(model, lam, th - h)) / (2.0 * h)
    return -dp / 3.0


# ---------------------------------------------------------------------------
# Energy eigenfunction and first-order eigenvalue


@dataclass(frozen=True)
class EnergyEigenfunctionSpec:
    """phi_0(v) = c (|v|^2 - 3 theta_bar) M_theta_bar(v), with the
    normalization constant fixed by a unit (1+|v|^2)-weighted L1 norm."""

    theta_bar: float
    c: float

    def __call__(self, v: np.ndarray) -> np.ndarray:
        th = self.theta_bar
        v2 = np.einsum("ij,ij->i", v, v)
        gauss = (2.0 * np.pi * th) ** -1.5 * np.exp(-v2 / (2.0 * th))
        return self.c * (v2 - 3.0 * th) * gauss


def _radial_gauss(theta: float, x: np.ndarray) -> np.ndarray:
    return (2.0 * np.pi * theta) ** -1.5 * np.exp(-x * x / (2.0 * theta))


def build_phi0(theta_bar: float) -> EnergyEigenfunctionSpec:
    """Construct the zero-mass isotropic eigenfunction at theta_bar."""
    if not (theta_bar > 0.0):
        raise InputError("theta_bar must be positive")
    th = theta_bar
    kink = np.sqrt(3.0 * th)
    def f(x):
        return np.abs(x * x - 3.0 * th) * (1.0 + x * x) * 4.0 * np.pi * x * x * _radial_gauss(th, x)
    norm = (adaptive_quad(f, 0.0, kink, rel_tol=1e-12)
            + adaptive_quad(f, kink, 40.0 * np.sqrt(th), rel_tol=1e-12))
    return EnergyEigenfunctionSpec(theta_bar=th, c=1.0 / norm)


def phi0_checks(spec: EnergyEigenfunctionSpec) -> dict:
    """Quadrature diagnostics: mass, |momentum|, and the weighted norm."""
    th = spec.theta_bar
    kink = np.sqrt(3.0 * th)
    def radial(g):
        f = lambda x: g(x) * 4.0 * np.pi * x * x * _radial_gauss(th, x) * spec.c
        return (adaptive_quad(f, 0.0, kink, rel_tol=1e-12)
                + adaptive_quad(f, kink, 40.0 * np.sqrt(th), rel_tol=1e-12))
    mass = radial(lambda x: x * x - 3.0 * th)
    norm = radial(lambda x: np.abs(x * x - 3.0 * th) * (1.0 + x * x))
    # Momentum: odd integrand; evaluate on a symmetric tensor grid.
    x, w = gauss_legendre(-8.0 * np.sqrt(th), 8.0 * np.sqrt(th), 48)
    gx, gy, gz = np.meshgrid(x, x, x, indexing="ij")
    nodes = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    wt = (w[:, None, None] * w[None, :, None] * w[None, None, :]).ravel()
    vals = spec(nodes) * wt
    momentum = (nodes * vals[:, None]).sum(axis=0)
    return {"mass": mass, "momentum": float(np.linalg.norm(momentum)), "weighted_norm": norm}


def _energy_of_phi0(spec: EnergyEigenfunctionSpec) -> float:
    """E(phi_0) = int phi_0 |v|^2 dv by radial quadrature (= 6 c theta^2)."""
    th = spec.theta_bar
    kink = np.sqrt(3.0 * th)
    f = lambda x: (x * x - 3.0 * th) * x * x * 4.0 * np.pi * x * x * _radial_gauss(th, x) * spec.c
    return (adaptive_quad(f, 0.0, kink, rel_tol=1e-12)
            + adaptive_quad(f, kink, 40.0 * np.sqrt(th), rel_tol=1e-12))


def _i0_radial(kernel: FirstOrderKernel, spec: EnergyEigenfunctionSpec) -> float:
    """I_0(G_0, phi_0) via the radial reduction with the confluent
    hypergeometric closed form of the inner noncentral moment."""
    th, p = spec.theta_bar, kernel.p
    pref = (2.0 * th) ** (p / 2.0) * gamma_fn((3.0 + p) / 2.0) / gamma_fn(1.5)
    def f(x):
        inner = pref * hyp1f1(-p / 2.0, 1.5, -x * x / (2.0 * th))
        return ((x * x - 3.0 * th) * inner * 4.0 * np.pi * x * x
                * _radial_gauss(th, x) * spec.c)
    kink = np.sqrt(3.0 * th)
    val = (adaptive_quad(f, 0.0, kink, rel_tol=1e-10)
           + adaptive_quad(f, kink, 40.0 * np.sqrt(th), rel_tol=1e-10))
    return kernel.beta * val


def _i0_tensor(kernel: FirstOrderKernel, spec: EnergyEigenfunctionSpec,
               n_nodes: int = 160) -> float:
    """I_0(G_0, phi_0) via tensor Gauss-Legendre over (|v|, |v_*|, angle).

    Independent of the hypergeometric route; used for cross-checks.
    """
    th, p = spec.theta_bar, kernel.p
    xmax = 14.0 * np.sqrt(th)
    x, wx = gauss_legendre(0.0, xmax, n_nodes)
    mu, wmu = gauss_legendre(-1.0, 1.0, n_nodes)
    g = 4.0 * np.pi * x * x * _radial_gauss(th, x)
    phi_w = wx * g * (x * x - 3.0 * th) * spec.c
    gauss_w = wx * g
    X, Y, M = np.meshgrid(x, x, mu, indexing="ij")
    rel = np.maximum(X * X + Y * Y - 2.0 * X * Y * M, 0.0) ** (p / 2.0)
    return kernel.beta * float(np.einsum("i,j,k,ijk->", phi_w, gauss_w, 0.5 * wmu, rel))


def predict_mu_first_order(expansion: ExpansionParams, theta_bar: float,
                           lam: float, scheme: str = "radial") -> float:
    """First-order eigenvalue -lambda^gamma I_0(G_0, phi_0)/E(phi_0) for a
    power-law restitution family."""
    kernel = FirstOrderKernel(beta=KAPPA * expansion.a / (4.0 + expansion.gamma),
                              p=3.0 + expansion.gamma, gamma=expansion.gamma)
    return _mu_first_order_kernel(kernel, theta_bar, lam, scheme)


def _mu_first_order_kernel(kernel: FirstOrderKernel, theta_bar: float,
                           lam: float, scheme: str = "radial") -> float:
    spec = build_phi0(theta_bar)
    if scheme == "radial":
        i0 = _i0_radial(kernel, spec)
    elif scheme == "tensor":
        i0 = _i0_tensor(kernel, spec)
    else:
        raise InputError(f"unknown scheme {scheme!r}")
    return -lam**kernel.gamma * i0 / _energy_of_phi0(spec)


def mu_first_order(model: RestitutionModel, lam: float, scheme: str = "radial") -> float:
    """Model-aware first-order eigenvalue prediction at diffusion lambda."""
    kernel = first_order_kernel(model)
    theta_bar = _theta_bar_from_kernel(kernel)
    return _mu_first_order_kernel(kernel, theta_bar, lam, scheme)


# ---------------------------------------------------------------------------
# Steady state and linear-response measurement


@dataclass(frozen=True)
class MuEstimate:
    """Measured and predicted energy eigenvalue at one lambda."""

    lam: float
    mu_measured: float
    mu_err: float
    mu_predicted: float
    gamma_used: float
    n_particles: int
    t_end: float
    seed: int
    r_squared: float = float("nan")


def _slope_with_se(t: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    tc = t - t.mean()
    denom = float(np.sum(tc * tc))
    if denom == 0.0 or t.size < 3:
        return 0.0, np.inf
    slope = float(np.sum(tc * y) / denom)
    resid = y - y.mean() - slope * tc
    s2 = float(np.sum(resid * resid)) / (t.size - 2)
    return slope, np.sqrt(s2 / denom)


def _relaxation_time(model: RestitutionModel, lam: float) -> float:
    try:
        mu = closure_mu(model, lam)
    except Exception:
        mu = 0.0
    return 1.0 / abs(mu) if mu != 0.0 else np.inf


def steady_state(config: SimConfig, *, avg_collision_times: float | str = "auto",
                 relax_times: float = 5.0, slope_sigma: float = 2.0,
                 dissipation_snapshots: int = 8,
                 dissipation_pairs: int = 400_000,
                 tail_A: float = 0.1) -> tuple[ParticleEnsemble, MomentReport]:
    """Drive the homogeneous thermostatted gas to stationarity.

    Phase 1 runs from a Maxwellian at the moment-balance temperature until
    the sliding-window temperature slope is compatible with zero at
    ``slope_sigma`` standard errors over the averaging span; phase 2 keeps
    running over the same span to accumulate the time-averaged report
    (energy, temperature, dissipation, tail moment).  The span is at
    least 20 mean collision times; "auto" widens it to three energy
    relaxation times when those are longer, so the averaged energy is
    meaningful despite its autocorrelation.  config.t_end caps the total
    budget.
    """
    driven = config.thermostat_on and config.lam > 0.0
    if not driven and not (config.lam == 0.0 and not config.thermostat_on):
        raise ConfigError("steady_state needs the thermostat on with lambda > 0 "
                          "(or the elastic lambda = 0, thermostat off case)")
    if not config.homogeneous:
        raise ConfigError("steady_state runs on the homogeneous (1,1,1) grid")

    if driven:
        theta0 = predict_theta_inf(config.model, config.lam)
        relax = min(_relaxation_time(config.model, config.lam), config.t_end)
    else:
        theta0 = 1.0
        relax = 0.0
    ens = init_ensemble(Maxwellian(theta=theta0), config.n_particles, config.seed)
    sim = Simulation(config, ens)
    mct = sim.mean_collision_time()
    sample_every = max(1, round(0.5 * mct / sim.dt))
    burn_t = relax_times * relax
    if avg_collision_times == "auto":
        avg_collision_times = max(20.0, 3.0 * relax / mct)

    ts: list[float] = []
    th: list[float] = []
    window = avg_collision_times * mct
    stationary = False
    while sim.time < config.t_end:
        sim.run_steps(sample_every)
        rep = moments(sim.ensemble)
        ts.append(sim.time)
        th.append(rep.temperature)
        if sim.time < max(burn_t, window):
            continue
        t_arr = np.array(ts)
        keep = t_arr >= sim.time - window
        if keep.sum() < 10:
            continue
        slope, se = _slope_with_se(t_arr[keep], np.array(th)[keep])
        # Absolute floor covers exactly-conserved cases where se underflows.
        if abs(slope) <= slope_sigma * se or abs(slope) * window <= 1e-9 * th[-1]:
            stationary = True
            break
    if not stationary:
        t_arr = np.array(ts)
        keep = t_arr >= (t_arr[-1] - window if ts else 0.0)
        slope, se = _slope_with_se(t_arr[keep], np.array(th)[keep]) if keep.sum() > 2 else (np.nan, np.nan)
        raise ConvergenceError(
            f"temperature not stationary within t_end={config.t_end}: "
            f"last-window slope {slope:.3e} (se {se:.3e}), theta trail "
            f"{[f'{x:.4f}' for x in th[-5:]]}")

    # Phase 2: averaging over the stationary tail.
    n_avg_samples = max(int(round(window / (sample_every * sim.dt))), dissipation_snapshots)
    snap_at = set(np.linspace(1, n_avg_samples, dissipation_snapshots, dtype=int).tolist())
    energies, thetas, momenta, tails = [], [], [], []
    d_vals, d_errs = [], []
    for k in range(1, n_avg_samples + 1):
        sim.run_steps(sample_every)
        rep = moments(sim.ensemble)
        energies.append(rep.energy)
        thetas.append(rep.temperature)
        momenta.append(rep.momentum)
        if k in snap_at:
            if driven:
                est = dissipation(sim.ensemble, config.model, config.lam,
                                  QuadratureSpec(n_samples=dissipation_pairs,
                                                 seed=seeding.replica_seed(config.seed, 10_000 + k)))
                d_vals.append(est.value)
                d_errs.append(est.std_error)
            tails.append(stretched_tail_moment(sim.ensemble, A=tail_A, p=1.5))

    d_est = None
    if d_vals:
        spread = float(np.std(d_vals, ddof=1) / np.sqrt(len(d_vals))) if len(d_vals) > 1 else 0.0
        d_est = DissipationEstimate(value=float(np.mean(d_vals)),
                                    std_error=max(float(np.mean(d_errs)), spread))
    e_arr = np.asarray(energies)
    n_blocks = min(8, e_arr.size)
    blocks = np.array([b.mean() for b in np.array_split(e_arr, n_blocks)])
    e_se = float(blocks.std(ddof=1) / np.sqrt(n_blocks)) if n_blocks > 1 else 0.0
    report = MomentReport(
        time=sim.time, mass=1.0,
        momentum=np.mean(momenta, axis=0),
        energy=float(np.mean(energies)),
        temperature=float(np.mean(thetas)),
        dissipation=d_est,
        tail_moment=float(np.mean(tails)) if tails else None,
        energy_std_error=e_se,
    )
    return sim.ensemble, report


def _worker_count(explicit: int | None) -> int:
    if explicit is not None:
        return max(1, explicit)
    env = os.environ.get("GRANULITE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def _replica_energy_series(config: SimConfig, base_positions: np.ndarray,
                           base_velocities: np.ndarray, dt: float, seed_r: int,
                           delta: float, n_steps: int, sample_every: int
                           ) -> np.ndarray:
    """Evolve one perturbed replica and record its energy trace."""
    vel = base_velocities.copy()
    vbar = vel.mean(axis=0)
    vel = vbar + (vel - vbar) * np.sqrt(1.0 + delta)
    ens = ParticleEnsemble(base_positions.copy(), vel, time=0.0)
    cfg = replace(config, seed=seed_r, dt=dt)
    sim = Simulation(cfg, ens)
    out = []
    for k in range(n_steps):
        sim.step()
        if (k + 1) % sample_every == 0:
            out.append(moments(sim.ensemble).energy)
    return np.asarray(out)


def measure_mu(config: SimConfig, perturbation: float, replicas: int = 8, *,
               steady: tuple[ParticleEnsemble, MomentReport] | None = None,
               fit_start_collision_times: float = 2.0, decay_efolds: float = 5.5,
               samples_per_collision_time: float = 4.0,
               workers: int | None = None) -> MuEstimate:
    """Measure the energy eigenvalue by linear response.

    The steady ensemble is rescaled in velocity by sqrt(1 + delta) about
    its mean, evolved in independent replicas, and the replica-averaged
    excess energy E(t) - E_inf is fitted to an exponential on a window
    starting ``fit_start_collision_times`` mean collision times after the
    perturbation and ending at the replica-spread noise floor.  The
    reported error is the spread of per-replica rates.
    """
    if not (0.0 < perturbation <= 0.2):
        raise InputError(f"perturbation delta must lie in (0, 0.2], got {perturbation}")
    if replicas < 2:
        raise InputError("need at least 2 replicas")

    if steady is None:
        steady = steady_state(config)
    ens0, report = steady
    e_inf = report.energy

    probe_sim = Simulation(replace(config, seed=config.seed), ens0.copy())
    dt = probe_sim.dt
    mct = probe_sim.mean_collision_time()
    relax = _relaxation_time(config.model, config.lam)
    if not np.isfinite(relax):
        relax = 20.0 * mct
    t_start = fit_start_collision_times * mct
    t_run = t_start + decay_efolds * relax
    sample_every = max(1, round(mct / (samples_per_collision_time * dt)))
    n_steps = int(np.ceil(t_run / dt / sample_every)) * sample_every

    args = [(config, ens0.positions, ens0.velocities, dt,
             seeding.replica_seed(config.seed, r), perturbation, n_steps, sample_every)
            for r in range(replicas)]
    nw = _worker_count(workers)
    if nw > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=nw) as pool:
            traces = list(pool.map(_replica_energy_series_star, args))
    else:
        traces = [_replica_energy_series(*a) for a in args]
    traces = np.vstack(traces)
    t_grid = dt * sample_every * np.arange(1, traces.shape[1] + 1)

    y_mean = traces.mean(axis=0) - e_inf
    se = traces.std(axis=0, ddof=1) / np.sqrt(replicas)
    # The reference level carries its own uncertainty from the steady run.
    se = np.hypot(se, report.energy_std_error or 0.0)
    in_window = t_grid >= t_start
    below_floor = in_window & (y_mean < 3.0 * se)
    t_stop = float(t_grid[below_floor][0]) if np.any(below_floor) else float(t_grid[-1])
    if t_stop <= t_start:
        raise MeasurementQualityError(
            "perturbation signal is below the noise floor at the start of the "
            "fit window; increase delta, replicas, or particle count")
    window = (t_start, t_stop)
    sel = (t_grid >= window[0]) & (t_grid <= window[1]) & (y_mean > 0.0)
    if sel.sum() < 5:
        raise MeasurementQualityError(
            "fewer than 5 usable points above the noise floor; "
            "increase run length, replicas, or particle count")
    fit = fit_exponential_rate(np.column_stack([t_grid[sel], y_mean[sel]]), window)

    decay_span = abs(fit.rate) * (window[1] - window[0])
    if decay_span >= 0.5 and fit.r_squared < 0.8:
        raise MeasurementQualityError(
            f"exponential fit r^2 = {fit.r_squared:.3f} < 0.8; "
            "increase run length or particle count")

    rates = []
    for row in traces:
        yr = row - e_inf
        ok = sel & (yr > 0.0)
        if ok.sum() >= 5:
            f_r = fit_exponential_rate(np.column_stack([t_grid[ok], yr[ok]]), window)
            rates.append(f_r.rate)
    mu_err = float(np.std(rates, ddof=1) / np.sqrt(len(rates))) if len(rates) > 1 else float("nan")

    return MuEstimate(
        lam=config.lam, mu_measured=fit.rate, mu_err=mu_err,
        mu_predicted=mu_first_order(config.model, config.lam) if config.lam > 0 else 0.0,
        gamma_used=expansion_params(config.model).gamma,
        n_particles=config.n_particles, t_end=float(t_grid[-1]), seed=config.seed,
        r_squared=fit.r_squared)


def _replica_energy_series_star(args):
    return _replica_energy_series(*args)


def scaling_fit(estimates) -> tuple[float, float, float]:
    """Regress log|mu_measured| on log lambda: (gamma_hat, C_hat, r_squared)."""
    ests = list(estimates)
    lams = np.array([e.lam for e in ests], dtype=float)
    mus = np.array([e.mu_measured for e in ests], dtype=float)
    if np.unique(lams).size < 4:
        raise InputError("scaling fit needs at least 4 distinct lambda values")
    if np.any(mus >= 0.0):
        raise InputError("scaling fit requires all measured mu < 0")
    x = np.log(lams)
    z = np.log(-mus)
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, intercept), res, _, _ = np.linalg.lstsq(A, z, rcond=None)
    tot = float(np.sum((z - z.mean()) ** 2))
    ssr = float(res[0]) if res.size else float(np.sum((A @ [slope, intercept] - z) ** 2))
    r2 = 1.0 if tot == 0.0 else max(0.0, 1.0 - ssr / tot)
    return float(slope), float(np.exp(intercept)), r2


def haff_cooling_probe(config: SimConfig, *, theta_init: float = 1.0,
                       cooling_decades: float = 1.3,
                       samples_per_collision_time: float = 2.0
                       ) -> tuple[SpectralFit, float, np.ndarray]:
    """Free-cooling probe: fit T(t) = theta0 (1 + t/t0)^{-p}.

    Returns (fit, t0, series) where fit.rate = -p (negative exponent =
    decay), fit.r_squared refers to the log-temperature residuals, and
    series holds the sampled (t, T) trace.  Requires the thermostat to be
    off; the elastic case degenerates to a flat fit with p = 0.
    """
    if config.thermostat_on:
        raise ConfigError("haff probe requires the thermostat to be off")
    ens = init_ensemble(Maxwellian(theta=theta_init), config.n_particles, config.seed)
    sim = Simulation(config, ens)
    mct = sim.mean_collision_time()
    sample_every = max(1, round(mct / (samples_per_collision_time * sim.dt)))

    ts, th = [0.0], [moments(sim.ensemble).temperature]
    target = theta_init * 10.0 ** (-cooling_decades)
    while sim.time < config.t_end and th[-1] > target:
        sim.run_steps(sample_every)
        ts.append(sim.time)
        th.append(moments(sim.ensemble).temperature)
    t = np.asarray(ts)
    temp = np.asarray(th)
    series = np.column_stack([t, temp])
    window = (float(t[0]), float(t[-1]))

    if np.ptp(temp) < 1e-9 * temp[0]:
        return (SpectralFit(rate=0.0, intercept=float(np.log(temp[0])),
                            r_squared=1.0, window=window), float("inf"), series)

    def model_log_t(tt, log_theta0, log_t0, p):
        return log_theta0 - p * np.log1p(tt / np.exp(log_t0))

    p0 = [np.log(temp[0]), np.log(10.0 * mct), 2.0]
    popt, _ = curve_fit(model_log_t, t, np.log(temp), p0=p0, maxfev=20000)
    pred = model_log_t(t, *popt)
    z = np.log(temp)
    r2 = max(0.0, 1.0 - float(np.sum((z - pred) ** 2)) / float(np.sum((z - z.mean()) ** 2)))
    return (SpectralFit(rate=-float(popt[2]), intercept=float(popt[0]),
                        r_squared=r2, window=window), float(np.exp(popt[1])),
            series)
