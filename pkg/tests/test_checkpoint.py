import numpy as np
import pytest

from granulite.checkpoint import (CHECKPOINT_VERSION, load_checkpoint,
                                  resume_simulation, save_checkpoint)
from granulite.dsmc import SimConfig, Simulation
from granulite.ensemble import Maxwellian, init_ensemble
from granulite.errors import CheckpointError
from granulite.restitution import CappedPowerLaw, Constant, Viscoelastic


def make_sim(n=1500, lam=0.2, model=None, seed=77, dt=None):
    model = model or Constant(0.8)
    cfg = SimConfig(lam=lam, model=model, n_particles=n, dt=dt,
                    thermostat_on=True, seed=seed, t_end=5.0)
    return Simulation(cfg, init_ensemble(Maxwellian(1.0), n, seed))


def test_save_load_round_trip(tmp_path):
    sim = make_sim(model=CappedPowerLaw(2.0, 0.5, 0.3))
    sim.run_steps(17)
    path = tmp_path / "state.ckpt"
    save_checkpoint(path, sim)
    data = load_checkpoint(path)
    assert data.n == sim.ensemble.n
    assert data.step_index == 17
    assert data.time == sim.time
    assert data.lam == sim.config.lam
    assert data.model == sim.config.model
    np.testing.assert_array_equal(data.positions, sim.ensemble.positions)
    np.testing.assert_array_equal(data.velocities, sim.ensemble.velocities)


def test_write_read_write_byte_identical(tmp_path):
    sim = make_sim(model=Viscoelastic(1.0))
    sim.run_steps(5)
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(p1, sim)
    data = load_checkpoint(p1)
    sim2 = resume_simulation(data, sim.config)
    save_checkpoint(p2, sim2)
    assert p1.read_bytes() == p2.read_bytes()


def test_resume_continues_exact_trajectory(tmp_path):
    """A resumed run reproduces the uninterrupted trajectory bitwise."""
    sim_full = make_sim(seed=5)
    sim_half = make_sim(seed=5)
    sim_half.run_steps(20)
    path = tmp_path / "half.ckpt"
    save_checkpoint(path, sim_half)
    sim_full.run_steps(40)

    resumed = resume_simulation(load_checkpoint(path), sim_half.config)
    assert resumed.dt == sim_half.dt
    resumed.run_steps(20)
    np.testing.assert_array_equal(resumed.ensemble.velocities,
                                  sim_full.ensemble.velocities)
    np.testing.assert_array_equal(resumed.ensemble.positions,
                                  sim_full.ensemble.positions)
    assert resumed.time == sim_full.time


def test_unknown_version_rejected(tmp_path):
    sim = make_sim()
    path = tmp_path / "v.ckpt"
    save_checkpoint(path, sim)
    raw = bytearray(path.read_bytes())
    raw[4:8] = (99).to_bytes(4, "little")
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(path)


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "m.ckpt"
    sim = make_sim()
    save_checkpoint(path, sim)
    raw = bytearray(path.read_bytes())
    raw[:4] = b"NOPE"
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(path)


def test_truncated_payload_rejected(tmp_path):
    path = tmp_path / "t.ckpt"
    sim = make_sim()
    save_checkpoint(path, sim)
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) - 24])
    with pytest.raises(CheckpointError, match="payload"):
        load_checkpoint(path)


def test_resume_mismatch_rejected(tmp_path):
    sim = make_sim(lam=0.2)
    sim.run_steps(3)
    path = tmp_path / "x.ckpt"
    save_checkpoint(path, sim)
    data = load_checkpoint(path)
    from dataclasses import replace
    with pytest.raises(CheckpointError, match="lambda"):
        resume_simulation(data, replace(sim.config, lam=0.3))
    with pytest.raises(CheckpointError, match="model"):
        resume_simulation(data, replace(sim.config, model=Constant(0.5)))
    with pytest.raises(CheckpointError, match="seed"):
        resume_simulation(data, replace(sim.config, seed=123))
