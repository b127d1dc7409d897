"""Seed derivation and random sampling primitives.

One master seed drives an experiment.  Independent streams (data, noise,
model init, batching, ...) are derived from it by folding a short text
label into the seed with splitmix64, so changing one component's stream
never perturbs the others.  Bulk sampling then uses numpy's PCG64 with
the derived seed; Gaussian variates are produced by the Box-Muller
transform on uniform draws so the sampling recipe is fully documented.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One splitmix64 mixing step on a 64-bit state."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(master: int, label: str) -> int:
    """Derive an independent 64-bit sub-seed from ``master`` and a label.

    The label bytes are folded into the state one at a time, each fold
    followed by a splitmix64 mix, so distinct labels give uncorrelated
    streams deterministically.
    """
    h = splitmix64(master & _MASK64)
    for b in label.encode("utf-8"):
        h = splitmix64(h ^ b)
    return h


def make_rng(master: int, label: str) -> np.random.Generator:
    """PCG64 generator seeded from ``derive_seed(master, label)``."""
    return np.random.Generator(np.random.PCG64(derive_seed(master, label)))


def gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard normal draws via Box-Muller on uniform variates.

    Uses the cosine branch only: z = sqrt(-2 ln u1) * cos(2 pi u2),
    with u1 mapped to (0, 1] to keep the log finite.
    """
    n = int(np.prod(shape))
    u1 = 1.0 - rng.random(n)
    u2 = rng.random(n)
    z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
    return z.reshape(shape)
