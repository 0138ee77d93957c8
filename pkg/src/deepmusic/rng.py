"""Seedable, counter-based random streams.

Every stochastic operation in this package draws from a Philox (4x64)
counter-based generator.  Streams are keyed by a nonnegative integer seed
plus an integer derivation path, so independent substreams (one per dataset
record, Monte-Carlo trial, network, ...) never overlap and every result is
reproducible bit-for-bit from (seed, path).
"""

from __future__ import annotations

import numpy as np


def substream(seed: int, *path: int) -> np.random.Generator:
    """Return the Philox generator for ``seed`` and an integer derivation path."""
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *path: int) -> int:
    """Collapse (seed, path) into a single nonnegative integer seed."""
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def complex_normal(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples with E|x|^2 = variance.

    Real and imaginary parts are i.i.d. N(0, variance/2); the real block is
    drawn before the imaginary block so the stream layout is fixed.
    """
    scale = np.sqrt(variance / 2.0)
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return scale * (re + 1j * im)
