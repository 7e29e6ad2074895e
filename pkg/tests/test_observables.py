import numpy as np
import pytest

from granulite.ensemble import Maxwellian, ParticleEnsemble, TwoTemperature, init_ensemble, merge
from granulite.errors import InputError
from granulite.observables import (fit_exponential_rate, maxwellian_distance,
                                   moments, spatial_mode, stretched_tail_moment)


def test_moments_maxwellian_temperature():
    n = 100_000
    ens = init_ensemble(Maxwellian(2.0), n, 1)
    rep = moments(ens)
    assert rep.mass == 1.0
    assert abs(rep.temperature - 2.0) <= 3.0 * 2.0 * np.sqrt(2.0 / (3.0 * n))


def test_moments_single_particle_after_mean_subtraction():
    ens = init_ensemble(Maxwellian(1.0), 1, 2)
    rep = moments(ens)
    np.testing.assert_allclose(rep.momentum, 0.0, atol=1e-15)
    assert rep.energy == 0.0


def test_moments_two_particle_arithmetic():
    ens = ParticleEnsemble(np.full((2, 3), 0.5),
                           np.array([[1.0, 0, 0], [-1.0, 0, 0]]))
    rep = moments(ens)
    assert rep.energy == 1.0
    assert abs(rep.temperature - 1.0 / 3.0) < 1e-15
    np.testing.assert_allclose(rep.momentum, 0.0, atol=1e-15)


def test_moments_linear_under_merge():
    a = init_ensemble(Maxwellian(0.5), 3000, 3)
    b = init_ensemble(Maxwellian(3.0), 3000, 4)
    mm = moments(merge(a, b))
    assert abs(mm.energy - 0.5 * (moments(a).energy + moments(b).energy)) < 1e-13


def test_stretched_tail_moment_values():
    ens = ParticleEnsemble(np.full((4, 3), 0.5), np.zeros((4, 3)))
    assert stretched_tail_moment(ens, A=0.5) == 1.0
    one = ParticleEnsemble(np.full((1, 3), 0.5), np.array([[1.0, 0.0, 0.0]]))
    assert abs(stretched_tail_moment(one, A=0.5, p=1.5) - np.exp(0.5)) < 1e-14
    assert abs(stretched_tail_moment(one, A=0.5, p=1.5, log=True) - 0.5) < 1e-14
    with pytest.raises(InputError):
        stretched_tail_moment(one, A=0.0)


def test_stretched_tail_moment_log_space_no_overflow():
    big = ParticleEnsemble(np.full((2, 3), 0.5),
                           np.array([[800.0, 0, 0], [700.0, 0, 0]]))
    val = stretched_tail_moment(big, A=1.0, p=1.5, log=True)
    assert np.isfinite(val)


def test_spatial_mode_uniform_noise_level():
    ens = init_ensemble(Maxwellian(1.0), 100_000, 5)
    assert abs(spatial_mode(ens, (1, 0, 0))) <= 4.0 / np.sqrt(ens.n)


def test_spatial_mode_zero_mode_is_mass():
    ens = init_ensemble(Maxwellian(1.0), 1000, 6)
    with pytest.raises(InputError):
        spatial_mode(ens, (0, 0, 0))
    assert spatial_mode(ens, (0, 0, 0), allow_zero=True) == pytest.approx(1.0)


def test_spatial_mode_energy_field():
    ens = init_ensemble(Maxwellian(1.0), 50_000, 7)
    amp = spatial_mode(ens, (1, 0, 0), field_kind="energy")
    assert abs(amp) <= 5.0 * 3.0 / np.sqrt(ens.n)


def test_maxwellian_distance_calibration():
    ens = init_ensemble(Maxwellian(1.0), 100_000, 8)
    assert maxwellian_distance(ens) <= 0.03


def test_maxwellian_distance_bimodal():
    ens = init_ensemble(TwoTemperature(0.2, 5.0, 0.5), 100_000, 9)
    assert maxwellian_distance(ens) >= 0.3


def test_maxwellian_distance_grows_with_binning_noise():
    small = init_ensemble(Maxwellian(1.0), 2_000, 10)
    big = init_ensemble(Maxwellian(1.0), 200_000, 10)
    assert maxwellian_distance(small) > maxwellian_distance(big)


def test_maxwellian_distance_needs_particles():
    with pytest.raises(InputError):
        maxwellian_distance(init_ensemble(Maxwellian(1.0), 100, 11))


def test_fit_exponential_exact():
    t = np.linspace(0.0, 3.0, 40)
    fit = fit_exponential_rate(np.column_stack([t, np.exp(-2.0 * t)]), (0.0, 3.0))
    assert abs(fit.rate + 2.0) < 1e-12
    assert fit.r_squared == pytest.approx(1.0)


def test_fit_exponential_constant():
    t = np.linspace(0.0, 3.0, 40)
    fit = fit_exponential_rate(np.column_stack([t, np.full_like(t, 2.5)]), (0.0, 3.0))
    assert abs(fit.rate) < 1e-14


def test_fit_exponential_noisy_oracle():
    rng = np.random.default_rng(123)
    t = np.linspace(0.0, 5.0, 200)
    y = 3.0 * np.exp(-0.7 * t) * (1.0 + 0.01 * rng.standard_normal(t.size))
    fit = fit_exponential_rate(np.column_stack([t, y]), (0.0, 5.0))
    assert abs(fit.rate + 0.7) <= 0.02
    assert fit.r_squared > 0.99


def test_fit_exponential_scale_invariance():
    rng = np.random.default_rng(7)
    t = np.linspace(0.0, 2.0, 50)
    y = np.exp(-1.3 * t) * (1.0 + 0.02 * rng.standard_normal(t.size))
    f1 = fit_exponential_rate(np.column_stack([t, y]), (0.0, 2.0))
    f2 = fit_exponential_rate(np.column_stack([t, 17.0 * y]), (0.0, 2.0))
    assert abs(f1.rate - f2.rate) < 1e-12
    assert abs(f2.intercept - f1.intercept - np.log(17.0)) < 1e-10


def test_fit_exponential_errors():
    t = np.linspace(0.0, 1.0, 10)
    with pytest.raises(InputError):
        fit_exponential_rate(np.column_stack([t[:4], np.exp(-t[:4])]), (0.0, 1.0))
    y = np.exp(-t)
    y[5] = -1.0
    with pytest.raises(InputError):
        fit_exponential_rate(np.column_stack([t, y]), (0.0, 1.0))
