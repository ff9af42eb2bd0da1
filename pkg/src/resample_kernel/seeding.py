"""Bit-exact seed derivation.

``child_seed(master, stream, index)`` applies the SplitMix64 finalizer to
``(master XOR ((stream << 32) + index)) mod 2**64``::

    z = (x + 0x9E3779B97F4A7C15)            mod 2**64
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 mod 2**64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB mod 2**64
    return z ^ (z >> 31)

Streams 1..L are encoder layers (index = unit), ``KMEANS_STREAM`` is k-means restarts
(index = restart) and ``REPETITION_STREAM`` is experiment repetitions (index = repetition).
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1

KMEANS_STREAM = 0x4B4D
REPETITION_STREAM = 0x5245


def child_seed(master: int, stream: int, index: int) -> int:
    z = (int(master) ^ ((int(stream) << 32) + int(index))) & MASK64
    z = (z + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def child_rng(master: int, stream: int, index: int) -> np.random.Generator:
    return np.random.default_rng(child_seed(master, stream, index))
