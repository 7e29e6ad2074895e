"""Binary checkpoints: little-endian header + raw particle payload.

Layout (all little-endian):
  magic       4 bytes  b"GRNL"
  version     u32      currently 1
  N           u64
  time        f64
  lambda      f64
  model tag   u32      0 constant / 1 viscoelastic / 2 capped power law
  params      3 x f64  (e0,0,0) / (a,0,0) / (a, gamma, e_min)
  master seed u64
  step count  u64
  payload     N x 3 f64 positions, then N x 3 f64 velocities

Readers reject unknown versions.  Because RNG streams are keyed by
(seed, phase, step), resuming from a checkpoint continues the exact
trajectory of the uninterrupted run when the same dt is used.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .dsmc import SimConfig, Simulation
from .ensemble import ParticleEnsemble
from .errors import CheckpointError
from .restitution import CappedPowerLaw, Constant, RestitutionModel, Viscoelastic

__all__ = ["CHECKPOINT_VERSION", "CheckpointData", "save_checkpoint",
           "load_checkpoint", "resume_simulation"]

MAGIC = b"GRNL"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<4sIQddIdddQQ")


@dataclass(frozen=True)
class CheckpointData:
    n: int
    time: float
    lam: float
    model: RestitutionModel
    seed: int
    step_index: int
    positions: np.ndarray
    velocities: np.ndarray


def _model_tag(model: RestitutionModel) -> tuple[int, float, float, float]:
    if isinstance(model, Constant):
        return 0, model.e0, 0.0, 0.0
    if isinstance(model, Viscoelastic):
        return 1, model.a, 0.0, 0.0
    if isinstance(model, CappedPowerLaw):
        return 2, model.a, model.gamma, model.e_min
    raise CheckpointError(f"cannot serialize model {model!r}")


def _model_from_tag(tag: int, p1: float, p2: float, p3: float) -> RestitutionModel:
    if tag == 0:
        return Constant(e0=p1)
    if tag == 1:
        return Viscoelastic(a=p1)
    if tag == 2:
        return CappedPowerLaw(a=p1, gamma=p2, e_min=p3)
    raise CheckpointError(f"unknown model tag {tag}")


def save_checkpoint(path, sim: Simulation) -> None:
    tag, p1, p2, p3 = _model_tag(sim.config.model)
    header = _HEADER.pack(
        MAGIC, CHECKPOINT_VERSION, sim.ensemble.n, sim.time, sim.config.lam,
        tag, p1, p2, p3, sim.config.seed & (2**64 - 1), sim.step_index)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(sim.ensemble.positions, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(sim.ensemble.velocities, dtype="<f8").tobytes())


def load_checkpoint(path) -> CheckpointData:
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        if len(raw) != _HEADER.size:
            raise CheckpointError("truncated checkpoint header")
        magic, version, n, time, lam, tag, p1, p2, p3, seed, step = _HEADER.unpack(raw)
        if magic != MAGIC:
            raise CheckpointError(f"bad magic {magic!r}; not a checkpoint file")
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        payload = np.frombuffer(fh.read(), dtype="<f8")
    if payload.size != 2 * 3 * n:
        raise CheckpointError(
            f"payload has {payload.size} doubles, expected {2 * 3 * n}")
    positions = payload[: 3 * n].reshape(n, 3).astype(np.float64)
    velocities = payload[3 * n:].reshape(n, 3).astype(np.float64)
    return CheckpointData(n=n, time=time, lam=lam,
                          model=_model_from_tag(tag, p1, p2, p3),
                          seed=seed, step_index=step,
                          positions=positions, velocities=velocities)


def resume_simulation(data: CheckpointData, config: SimConfig) -> Simulation:
    """Rebuild a Simulation from checkpoint state and a matching config.

    lambda, model, seed, and particle count must agree with the
    checkpoint.  If the config does not pin dt, it is recovered as
    time / step_index (exact for the power-of-two automatic dt).
    """
    if data.n != config.n_particles:
        raise CheckpointError(
            f"checkpoint has {data.n} particles, config expects {config.n_particles}")
    if abs(data.lam - config.lam) > 1e-15:
        raise CheckpointError(f"lambda mismatch: checkpoint {data.lam}, config {config.lam}")
    if data.model != config.model:
        raise CheckpointError(f"model mismatch: checkpoint {data.model}, config {config.model}")
    if (data.seed & (2**64 - 1)) != (config.seed & (2**64 - 1)):
        raise CheckpointError("seed mismatch between checkpoint and config")

    if config.dt is not None:
        dt = config.dt
        if data.step_index > 0 and abs(data.step_index * dt - data.time) > 1e-9 * max(data.time, 1.0):
            raise CheckpointError("config dt is inconsistent with checkpoint time/step")
    elif data.step_index > 0:
        dt = data.time / data.step_index
    else:
        dt = None  # fresh start; Simulation will pick the automatic dt

    ens = ParticleEnsemble(data.positions.copy(), data.velocities.copy(), time=data.time)
    cfg = SimConfig(lam=config.lam, model=config.model, n_particles=config.n_particles,
                    cell_counts=config.cell_counts, dt=dt,
                    thermostat_on=config.thermostat_on,
                    momentum_projection=config.momentum_projection,
                    seed=config.seed, t_end=config.t_end)
    return Simulation(cfg, ens, step_index=data.step_index)
