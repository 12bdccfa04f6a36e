"""Seed derivation and generator construction.

All randomness in the package flows from a 64-bit master seed. Child
streams are derived by hashing ``(master_seed, *path)`` with SHA-256 and
taking the first 8 bytes, so any task (a replication index, a bootstrap
replicate, a subcommand name) gets an independent, reproducible stream.
Generators are PCG64, seeded through ``numpy.random.SeedSequence``.
"""

from __future__ import annotations

import hashlib

import numpy as np


def child_seed(master_seed: int, *path) -> int:
    """Derive a 64-bit child seed from a master seed and a task path."""
    h = hashlib.sha256()
    h.update(str(int(master_seed)).encode())
    for part in path:
        h.update(b"/")
        h.update(str(part).encode())
    return int.from_bytes(h.digest()[:8], "little")


def make_rng(seed: int, *path) -> np.random.Generator:
    """Build a PCG64 generator; with a path, derive a child seed first."""
    if path:
        seed = child_seed(seed, *path)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
