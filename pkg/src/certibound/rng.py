"""Derived random streams keyed by tree vertex.

Samplers at distinct vertices must be mutually independent and reproducible
regardless of the order in which vertices are visited. Each stream is keyed
by (master seed, vertex path, purpose tag, step); the key is hashed into a
spawn key for numpy's SeedSequence.

The MCMC sampler draws its final proposal block from the SAMPLE stream, the
same stream the exact sampler consumes. When the target density is uniform
every proposal is accepted, so the two samplers then produce bitwise
identical output under a shared master seed; this realizes, in code, the
coupling that makes the chain-based estimator agree exactly with the ideal
one whenever the chain has reached its target law.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

# Purpose tags for per-vertex streams.
TAG_SAMPLE = 0  # exact conditional draws, and the final MH proposal block
TAG_INIT = 1  # chain initialization
TAG_PROPOSAL = 2  # intermediate MH proposal blocks
TAG_ACCEPT = 3  # MH acceptance variates


def derive_rng(
    master_seed: int, path: tuple[int, ...], tag: int, step: int = 0
) -> np.random.Generator:
    """Independent generator for (seed, vertex, purpose, step)."""
    if master_seed < 0:
        raise ValueError(f"master seed must be non-negative, got {master_seed}")
    h = hashlib.blake2b(digest_size=16, person=b"certibound.rng")
    h.update(struct.pack("<III", tag, step, len(path)))
    for index in path:
        h.update(struct.pack("<I", index))
    words = struct.unpack("<4I", h.digest())
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=words)
    return np.random.default_rng(seq)
