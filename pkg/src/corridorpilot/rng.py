"""Seeded random number generation.

Every stochastic component in the package draws from numpy's PCG64 via this
module, so a seed fully determines weights, worlds, noise, and shuffles.
PCG64 is a named, documented 64-bit generator; two runs with the same seed
produce bitwise-identical streams.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np


def make_rng(seed: int | Sequence[int]) -> np.random.Generator:
    """Return a PCG64 generator for ``seed``.

    ``seed`` may be a single int or a sequence of ints; sequences let callers
    decorrelate streams (e.g. per-world, per-sample) without coordination.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
