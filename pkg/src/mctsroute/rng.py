"""Deterministic random number streams.

Two generators are used, both fully specified so that every artifact
(circuits, datasets, trained weights, routing results, bench reports) is
bitwise reproducible across runs and platforms:

* numpy ``PCG64`` seeded through ``SeedSequence`` for dataset-scale work
  (circuit carving, sample extraction, shuffles, weight init).  Purpose
  streams are derived with ``SeedSequence(seed, spawn_key=(purpose,))``.
* ``SplitMix64`` for the search engine.  It is a few integer operations,
  which lets the compiled routing kernels and the pure-Python reference
  consume the exact same draw sequence.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1

# SeedSequence spawn keys, one per purpose.
STREAM_CIRCUIT = 0
STREAM_OBSTACLE = 1
STREAM_SAMPLE = 2
STREAM_SPLIT = 3
STREAM_TRAIN = 4


def purpose_rng(seed: int, purpose: int) -> np.random.Generator:
    """A PCG64 generator for one purpose stream of ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(purpose,))))


class SplitMix64:
    """SplitMix64 sequence (Steele et al.), state advances by the golden gamma."""

    GAMMA = 0x9E3779B97F4A7C15

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + self.GAMMA) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def next_below(self, m: int) -> int:
        """Uniform draw in [0, m) from the top 32 bits (fixed-point scale)."""
        return ((self.next_u64() >> 32) * m) >> 32
