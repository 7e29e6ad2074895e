import numpy as np
import pytest

from granulite.errors import DegeneratePairError, InputError
from granulite.kinematics import (energy_loss, post_collision_n,
                                  post_collision_sigma, sigma_from_n)
from granulite.restitution import Constant, Viscoelastic


def random_unit(rng, n):
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def test_elastic_head_on_swap():
    out = post_collision_n((1, 0, 0), (-1, 0, 0), (1, 0, 0), Constant(1.0), 0.0)
    np.testing.assert_allclose(out.v_prime, [-1, 0, 0], atol=1e-15)
    np.testing.assert_allclose(out.v_star_prime, [1, 0, 0], atol=1e-15)
    assert out.delta_energy == 0.0


def test_inelastic_head_on():
    out = post_collision_n((1, 0, 0), (-1, 0, 0), (1, 0, 0), Constant(0.5), 0.0)
    np.testing.assert_allclose(out.v_prime, [-0.5, 0, 0], atol=1e-15)
    np.testing.assert_allclose(out.v_star_prime, [0.5, 0, 0], atol=1e-15)
    assert abs(out.delta_energy - (-1.5)) < 1e-15
    assert out.impact_speed == 2.0


def test_tangential_component_untouched():
    out = post_collision_n((1, 1, 0), (0, 0, 0), (0, 1, 0), Constant(1.0), 0.0)
    np.testing.assert_allclose(out.v_prime, [1, 0, 0], atol=1e-15)
    np.testing.assert_allclose(out.v_star_prime, [0, 1, 0], atol=1e-15)


def test_sigma_equals_uhat_is_noop():
    v, vs = np.array([2.0, 1.0, 0.5]), np.array([0.0, 0.0, 0.5])
    u = v - vs
    uh = u / np.linalg.norm(u)
    out = post_collision_sigma(v, vs, uh, Viscoelastic(1.0), 0.7)
    assert out.impact_speed < 1e-12
    np.testing.assert_allclose(out.v_prime, v, atol=1e-12)
    np.testing.assert_allclose(out.v_star_prime, vs, atol=1e-12)


def test_sigma_head_on_matches_n_form():
    out = post_collision_sigma((1, 0, 0), (-1, 0, 0), (-1, 0, 0), Constant(0.5), 0.0)
    assert abs(out.impact_speed - 2.0) < 1e-14
    np.testing.assert_allclose(out.v_prime, [-0.5, 0, 0], atol=1e-14)


def test_elastic_sigma_conserves_energy():
    rng = np.random.default_rng(5)
    v, vs = rng.standard_normal((100, 3)), rng.standard_normal((100, 3))
    sig = random_unit(rng, 100)
    out = post_collision_sigma(v, vs, sig, Constant(1.0), 0.0)
    before = (v**2).sum(1) + (vs**2).sum(1)
    after = (out.v_prime**2).sum(1) + (out.v_star_prime**2).sum(1)
    np.testing.assert_allclose(after, before, rtol=1e-13)


def test_sigma_from_n_examples():
    np.testing.assert_allclose(sigma_from_n((1, 0, 0), (1, 0, 0)), [-1, 0, 0], atol=1e-15)
    np.testing.assert_allclose(sigma_from_n((1, 0, 0), (0, 1, 0)), [1, 0, 0], atol=1e-15)


def test_energy_loss_examples():
    assert energy_loss((1, 0, 0), (-1, 0, 0), (-1, 0, 0), 1.0) == 0.0
    val = energy_loss((1, 0, 0), (-1, 0, 0), (-1, 0, 0), 0.5)
    assert abs(val - (-1.5)) < 1e-15


def test_cross_parametrization_and_identities_bulk():
    """sigma-form with sigma_from_n reproduces the n-form; the energy-loss
    formula matches the recomputation from output velocities."""
    rng = np.random.default_rng(42)
    n = 100_000
    v = rng.standard_normal((n, 3)) * 1.5
    vs = rng.standard_normal((n, 3)) * 1.5
    nh = random_unit(rng, n)
    u = v - vs
    uh = u / np.linalg.norm(u, axis=1, keepdims=True)
    model = Viscoelastic(1.0)
    lam = 0.6

    out_n = post_collision_n(v, vs, nh, model, lam)
    sig = sigma_from_n(uh, nh)
    assert np.abs(np.linalg.norm(sig, axis=1) - 1.0).max() <= 1e-12
    out_s = post_collision_sigma(v, vs, sig, model, lam)

    assert np.abs(out_n.v_prime - out_s.v_prime).max() <= 1e-12
    assert np.abs(out_n.v_star_prime - out_s.v_star_prime).max() <= 1e-12

    scale = 1.0 + np.linalg.norm(v, axis=1) + np.linalg.norm(vs, axis=1)
    mom = np.linalg.norm((out_s.v_prime + out_s.v_star_prime) - (v + vs), axis=1)
    assert np.all(mom <= 1e-13 * scale)

    d_actual = ((out_s.v_prime**2).sum(1) + (out_s.v_star_prime**2).sum(1)
                - (v**2).sum(1) - (vs**2).sum(1))
    d_formula = energy_loss(v, vs, sig, out_s.e_used)
    assert np.abs(d_actual - d_formula).max() <= 1e-12
    assert np.all(out_s.delta_energy <= 1e-15)
    # Zero loss only for elastic outcomes or grazing impact.
    tight = np.abs(out_s.delta_energy) < 1e-15
    assert np.all((np.asarray(out_s.e_used)[tight] > 1 - 1e-9)
                  | (np.asarray(out_s.impact_speed)[tight] < 1e-6))


def test_input_validation():
    with pytest.raises(InputError):
        post_collision_n((1, 0, 0), (0, 0, 0), (1, 1, 0), Constant(1.0), 0.0)
    with pytest.raises(InputError):
        post_collision_sigma((1, 0, 0), (0, 0, 0), (0.5, 0, 0), Constant(1.0), 0.0)
    with pytest.raises(DegeneratePairError):
        post_collision_sigma((1, 0, 0), (1, 0, 0), (1, 0, 0), Constant(1.0), 0.0)
    with pytest.raises(InputError):
        energy_loss((1, 0, 0), (0, 0, 0), (1, 0, 0), 1.5)
