"""Deterministic RNG stream derivation.

Every stochastic phase of a run draws from a generator keyed by
(master seed, phase tag, step index).  Streams therefore depend only on
where in the schedule they are used, never on execution history, which
makes checkpoint resume reproduce the uninterrupted trajectory exactly
and makes results independent of how work is distributed over workers.
"""

from __future__ import annotations

import numpy as np

# Phase tags; values are part of the reproducibility contract.
PHASE_INIT = 0
PHASE_COLLIDE = 1
PHASE_THERMOSTAT = 2
PHASE_REPLICA = 3
PHASE_ORACLE = 4


def stream(master_seed: int, phase: int, index: int = 0) -> np.random.Generator:
    """Return the generator for (master_seed, phase, index)."""
    ss = np.random.SeedSequence(entropy=int(master_seed) & (2**64 - 1),
                                spawn_key=(int(phase), int(index)))
    return np.random.Generator(np.random.PCG64(ss))


def replica_seed(master_seed: int, replica: int) -> int:
    """Derive an independent 64-bit master seed for one replica."""
    ss = np.random.SeedSequence(entropy=int(master_seed) & (2**64 - 1),
                                spawn_key=(PHASE_REPLICA, int(replica)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
