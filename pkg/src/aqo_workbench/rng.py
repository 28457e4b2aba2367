"""Seeded random streams.

Every random draw in the package comes from numpy's PCG64 bit generator.  A
root seed is split into independent child streams with ``SeedSequence`` spawn
keys, so a single integer reproduces a whole experiment and adding a new
consumer never perturbs the draws seen by existing ones.

Stream keys in use:

* ``("generate", index)`` - instance ``index`` of a corpus
* ``("sample", iteration)`` - exact or QMC sampling inside a tuner iteration
* ``("qmc-chain", k)`` - chain ``k`` of a QMC sampling call, under the sampling seed
"""

from __future__ import annotations

import hashlib

import numpy as np

SEED_MASK = (1 << 64) - 1


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) & SEED_MASK))


def _key_word(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    digest = hashlib.sha256(str(part).encode()).digest()
    return int.from_bytes(digest[:4], "little")


def child_seed(seed: int, *key) -> int:
    """Derive a 64-bit seed for the stream named by ``key`` under ``seed``."""
    ss = np.random.SeedSequence(int(seed) & SEED_MASK, spawn_key=tuple(_key_word(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def child_rng(seed: int, *key) -> np.random.Generator:
    return make_rng(child_seed(seed, *key))
