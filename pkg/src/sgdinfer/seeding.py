"""Deterministic seed derivation.

All randomness flows from one master seed through ``numpy.random.SeedSequence``,
whose entropy pool hashes ``(master_seed, spawn_key)`` into independent
PCG64 states.  Keys are laid out as

* ``(0, k, label)``          - replication ``k``, stream ``label``
* ``(0, k, WEIGHTS, b)``     - multiplier weights of replica ``b`` in replication ``k``
* ``(1, label)``             - experiment-level streams (design, oracle MC)

so the data stream of a replication does not depend on ``B`` and a replica's
weights do not depend on how many other replicas exist.
"""

import os

import numpy as np

INIT = 0
DATA = 1
WEIGHTS = 2
DESIGN = 3
ORACLE = 4

SEED_ENV_VAR = "SGDINFER_SEED"

_REPLICATION_SCOPE = 0
_EXPERIMENT_SCOPE = 1


def substream(master_seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(master_seed), spawn_key=tuple(key)))


def replication_stream(master_seed, k, label):
    return substream(master_seed, _REPLICATION_SCOPE, k, label)


def replica_weight_streams(master_seed, k, B):
    return [substream(master_seed, _REPLICATION_SCOPE, k, WEIGHTS, b) for b in range(B)]


def experiment_stream(master_seed, label):
    return substream(master_seed, _EXPERIMENT_SCOPE, label)


def seed_from_env(default=None):
    """Master seed from ``$SGDINFER_SEED`` if set, else ``default``."""
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None or raw.strip() == "":
        return default
    seed = int(raw, 0)
    if not 0 <= seed < 2**64:
        raise ValueError(f"{SEED_ENV_VAR}={raw} is not an unsigned 64-bit integer")
    return seed
