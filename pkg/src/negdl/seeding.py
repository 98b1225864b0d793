"""Per-stage seed derivation.

Every random stage of a run draws from its own generator, seeded by hashing
``(master_seed, stage, index)``. Adding instances to a dataset therefore never
changes the negative database generated for any other instance.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master_seed: int, stage: str, index: int = 0) -> int:
    key = f"{int(master_seed)}/{stage}/{int(index)}".encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


def stage_rng(master_seed: int, stage: str, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master_seed, stage, index))
