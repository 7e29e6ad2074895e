from dataclasses import replace

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from granulite.dsmc import SimConfig
from granulite.ensemble import Maxwellian, init_ensemble
from granulite.errors import ConfigError, InputError
from granulite.restitution import (CappedPowerLaw, Constant, Viscoelastic,
                                   expansion_params)
from granulite.spectral_probe import (MuEstimate, build_phi0, closure_dissipation,
                                      closure_mu, first_order_kernel,
                                      gaussian_rel_speed_moment,
                                      haff_cooling_probe, measure_mu,
                                      mu_first_order, phi0_checks,
                                      predict_mu_first_order, predict_theta_bar,
                                      predict_theta_inf, scaling_fit,
                                      steady_state, theta_bar_for_model)

# Frozen first-order fixtures, each cross-checked below by two independent
# quadrature schemes (Gamma closed form vs radial; hyp1f1-radial vs tensor).
THETA_BAR_VISCO = 0.218929538165978     # a = 1
THETA_BAR_CONST = 0.223675057234912     # e0 = 1 - lambda family
THETA_BAR_CAPPED1 = 0.199471140200716   # a = 1, gamma = 1
MU_COEF_VISCO = -14.6165749345982       # mu / lambda^gamma
MU_COEF_CONST = -13.4123135457580
MU_COEF_CAPPED1 = -20.0530261970014
PHI0_NORM_VISCO = 1.272077535341        # c at THETA_BAR_VISCO


def test_gaussian_moment_two_schemes():
    for theta in (0.2, 1.0, 3.7):
        for p in (1.0, 3.0, 3.2, 5.0):
            a = gaussian_rel_speed_moment(theta, p, "gamma")
            b = gaussian_rel_speed_moment(theta, p, "radial")
            assert abs(a - b) <= 1e-10 * a


def test_theta_bar_fixtures_two_schemes():
    cases = [(Viscoelastic(1.0), THETA_BAR_VISCO),
             (Constant(0.9), THETA_BAR_CONST),
             (CappedPowerLaw(1.0, 1.0, 0.05), THETA_BAR_CAPPED1)]
    for model, frozen in cases:
        a = theta_bar_for_model(model, scheme="gamma")
        b = theta_bar_for_model(model, scheme="radial")
        assert abs(a - frozen) <= 1e-8 * frozen
        assert abs(a - b) <= 1e-8 * a


def test_predict_theta_bar_power_law_signature():
    th = predict_theta_bar(expansion_params(Viscoelastic(1.0)))
    assert abs(th - THETA_BAR_VISCO) <= 1e-8


def test_theta_bar_monotone_in_a():
    th1 = predict_theta_bar(expansion_params(Viscoelastic(1.0)))
    th2 = predict_theta_bar(expansion_params(Viscoelastic(2.0)))
    assert th2 < th1


def test_phi0_quadrature_checks():
    spec = build_phi0(THETA_BAR_VISCO)
    assert abs(spec.c - PHI0_NORM_VISCO) <= 1e-9 * PHI0_NORM_VISCO
    checks = phi0_checks(spec)
    assert abs(checks["mass"]) <= 1e-8
    assert checks["momentum"] <= 1e-8
    assert abs(checks["weighted_norm"] - 1.0) <= 1e-8


def test_mu_first_order_fixtures_and_schemes():
    cases = [(Viscoelastic(1.0), MU_COEF_VISCO, 0.2),
             (Constant(0.9), MU_COEF_CONST, 1.0),
             (CappedPowerLaw(1.0, 1.0, 0.05), MU_COEF_CAPPED1, 1.0)]
    lam = 0.07
    for model, coef, gam in cases:
        mu_r = mu_first_order(model, lam, scheme="radial")
        mu_t = mu_first_order(model, lam, scheme="tensor")
        assert abs(mu_r - mu_t) <= 1e-8 * abs(mu_r)
        assert abs(mu_r - coef * lam**gam) <= 1e-7 * abs(mu_r)
        # closed-form identity: mu = -p lambda^gamma / theta_bar at balance
        k = first_order_kernel(model)
        th = theta_bar_for_model(model)
        assert abs(mu_r - (-k.p * lam**k.gamma / th)) <= 1e-7 * abs(mu_r)


def test_predict_mu_first_order_negative():
    for a, gam in ((0.5, 0.2), (2.0, 0.7), (1.0, 1.0)):
        exp = expansion_params(CappedPowerLaw(a, gam, 0.05))
        th = predict_theta_bar(exp)
        assert predict_mu_first_order(exp, th, 0.05) < 0.0


def test_closure_matches_first_order_for_small_lambda():
    model = Constant(1.0 - 1e-4)
    mu_c = closure_mu(model, 1e-4)
    mu_1 = mu_first_order(model, 1e-4)
    assert abs(mu_c / mu_1 - 1.0) < 1e-3


def test_closure_dissipation_constant_closed_form():
    theta, e0 = 0.7, 0.85
    d = closure_dissipation(Constant(e0), 0.5, theta)
    expected = 0.5 * np.pi * (1 - e0**2) * gaussian_rel_speed_moment(theta, 3.0)
    assert abs(d - expected) <= 1e-9 * expected


def test_predict_theta_inf_finite_lambda_values():
    # Frozen from an independent scalar-quadrature run of the same balance.
    assert abs(predict_theta_inf(Constant(0.9), 0.1) - 0.231456) < 2e-5
    assert abs(predict_theta_inf(Viscoelastic(1.0), 0.1) - 0.327227) < 2e-5
    assert abs(closure_mu(Constant(0.9), 0.1) - (-1.296143)) < 2e-4


def test_scaling_fit_exact_power_law():
    ests = [MuEstimate(lam=l, mu_measured=-3.0 * l**0.2, mu_err=0.0,
                       mu_predicted=0.0, gamma_used=0.2, n_particles=1,
                       t_end=1.0, seed=0)
            for l in (0.01, 0.03, 0.1, 0.3)]
    gamma_hat, c_hat, r2 = scaling_fit(ests)
    assert abs(gamma_hat - 0.2) < 1e-12
    assert abs(c_hat - 3.0) < 1e-12
    assert r2 == pytest.approx(1.0)


def test_scaling_fit_input_errors():
    good = [MuEstimate(lam=l, mu_measured=-l, mu_err=0.0, mu_predicted=0.0,
                       gamma_used=1.0, n_particles=1, t_end=1.0, seed=0)
            for l in (0.1, 0.2, 0.3)]
    with pytest.raises(InputError):
        scaling_fit(good)  # only 3 distinct lambdas
    bad = good + [MuEstimate(lam=0.4, mu_measured=0.1, mu_err=0.0,
                             mu_predicted=0.0, gamma_used=1.0, n_particles=1,
                             t_end=1.0, seed=0)]
    with pytest.raises(InputError):
        scaling_fit(bad)


def test_steady_state_elastic_immediately_stationary():
    cfg = SimConfig(lam=0.0, model=Constant(1.0), n_particles=5000,
                    thermostat_on=False, seed=3, t_end=20.0)
    ens, rep = steady_state(cfg, avg_collision_times=5.0)
    assert abs(rep.temperature - 1.0) < 0.05
    assert rep.dissipation is None


def test_steady_state_rejects_bad_config():
    with pytest.raises(ConfigError):
        steady_state(SimConfig(lam=0.1, model=Constant(0.9), n_particles=100,
                               thermostat_on=False, seed=0, t_end=1.0))
    with pytest.raises(ConfigError):
        steady_state(SimConfig(lam=0.1, model=Constant(0.9), n_particles=100,
                               cell_counts=(2, 1, 1), seed=0, t_end=1.0))


def test_measure_mu_elastic_no_decay():
    cfg = SimConfig(lam=0.0, model=Constant(1.0), n_particles=4000,
                    thermostat_on=False, seed=5, t_end=20.0)
    steady = steady_state(cfg, avg_collision_times=5.0)
    est = measure_mu(cfg, 0.1, replicas=3, steady=steady,
                     decay_efolds=0.5)
    # Energy is conserved: the perturbation must not decay measurably.
    assert abs(est.mu_measured) < 0.05
    assert est.mu_predicted == 0.0


def test_measure_mu_validates_delta():
    cfg = SimConfig(lam=0.1, model=Constant(0.9), n_particles=100,
                    seed=0, t_end=1.0)
    with pytest.raises(InputError):
        measure_mu(cfg, 0.5)


def test_haff_elastic_flat():
    cfg = SimConfig(lam=0.0, model=Constant(1.0), n_particles=4000,
                    thermostat_on=False, seed=6, t_end=2.0)
    fit, t0, series = haff_cooling_probe(cfg)
    assert fit.rate == 0.0
    assert t0 == np.inf


def test_haff_requires_thermostat_off():
    cfg = SimConfig(lam=0.1, model=Constant(0.9), n_particles=100,
                    thermostat_on=True, seed=0, t_end=1.0)
    with pytest.raises(ConfigError):
        haff_cooling_probe(cfg)


def test_haff_constant_restitution_exponent():
    """Free cooling vs the moment-closure ODE dT/dt = -D(T)/3."""
    e0 = 0.9
    model = Constant(e0)
    n = 30_000
    cfg = SimConfig(lam=0.0, model=model, n_particles=n,
                    thermostat_on=False, seed=17, t_end=6.0)
    fit, t0, series = haff_cooling_probe(cfg, cooling_decades=1.2)
    temps = series[:, 1]
    assert np.all(np.diff(temps) < 0.0)
    p = -fit.rate
    assert abs(p - 2.0) <= 0.3
    assert fit.r_squared > 0.99
    # Trajectory against the closure ODE integrated numerically.
    theta0 = temps[0]
    sol = solve_ivp(lambda t, y: [-closure_dissipation(model, 0.0, y[0]) / 3.0],
                    (series[0, 0], series[-1, 0]), [theta0], rtol=1e-8,
                    t_eval=series[:, 0])
    rel = np.abs(temps - sol.y[0]) / sol.y[0]
    assert rel.max() < 0.05


def test_measure_mu_worker_pool_matches_serial(monkeypatch):
    cfg = SimConfig(lam=0.3, model=Constant(0.7), n_particles=3000,
                    seed=31, t_end=60.0)
    steady = steady_state(cfg)
    est1 = measure_mu(cfg, 0.1, replicas=3, steady=steady, workers=1)
    est2 = measure_mu(cfg, 0.1, replicas=3, steady=steady, workers=2)
    assert est1.mu_measured == est2.mu_measured
    assert est1.mu_err == est2.mu_err
    # GRANULITE_THREADS is an equivalent way to set the pool size
    monkeypatch.setenv("GRANULITE_THREADS", "2")
    est3 = measure_mu(cfg, 0.1, replicas=3, steady=steady)
    assert est3.mu_measured == est1.mu_measured


def test_theta_inf_converges_to_theta_bar_monotonically():
    # Constant family: e0 is tied to lambda point by point.
    th_bar = theta_bar_for_model(Constant(0.9))
    gaps = [abs(predict_theta_inf(Constant(1.0 - lam), lam) - th_bar)
            for lam in (0.2, 0.1, 0.05, 0.01)]
    assert all(g2 < g1 for g1, g2 in zip(gaps, gaps[1:]))
    model = Viscoelastic(1.0)
    th_bar = theta_bar_for_model(model)
    gaps = [abs(predict_theta_inf(model, lam) - th_bar)
            for lam in (0.2, 0.1, 0.05, 0.01)]
    assert all(g2 < g1 for g1, g2 in zip(gaps, gaps[1:]))


def test_steady_tail_moments_bounded_across_lambda():
    """exp(A |v|^{3/2}) moments of driven steady states share a common
    bound as lambda decreases (no blow-up toward the elastic limit)."""
    tails = []
    for lam in (0.2, 0.1, 0.05):
        cfg = SimConfig(lam=lam, model=Constant(1.0 - lam), n_particles=20_000,
                        thermostat_on=True, seed=int(lam * 1e4), t_end=60.0)
        _, rep = steady_state(cfg, dissipation_pairs=50_000)
        tails.append(rep.tail_moment)
    assert all(np.isfinite(t) for t in tails)
    assert max(tails) / min(tails) < 3.0
    assert not (tails[2] > tails[1] > tails[0] and tails[2] / tails[0] > 1.5)


def test_mu_invariant_under_perturbation_size():
    cfg = SimConfig(lam=0.3, model=Constant(0.7), n_particles=20_000,
                    thermostat_on=True, seed=713, t_end=60.0)
    steady = steady_state(cfg)
    est_a = measure_mu(cfg, 0.05, replicas=4, steady=steady)
    est_b = measure_mu(replace(cfg, seed=714), 0.1, replicas=4, steady=steady)
    err = np.hypot(est_a.mu_err, est_b.mu_err)
    assert abs(est_a.mu_measured - est_b.mu_measured) <= 4.0 * err
