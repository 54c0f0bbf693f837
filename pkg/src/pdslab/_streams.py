"""Counter-based random substreams.

Every stochastic operation in the package draws from a Philox generator
keyed by ``(master_seed, *path)``.  Philox is counter-based, so the draw
sequence is a pure function of the key: concurrent workers and changed
scheduling orders can never perturb each other's randomness.
"""

from __future__ import annotations

import numpy as np

_MASK = 0xFFFFFFFFFFFFFFFF

# Path tags used across the package.  Values are arbitrary but frozen:
# changing them changes every seeded result.
TAG_CHAIN = 1
TAG_SUBSAMPLE = 2
TAG_TRANSITION = 3
TAG_NEWTON = 4
TAG_EXCITATION = 5
TAG_QUANTIZER = 6
TAG_EXPANSION = 7
TAG_PROBE = 8


def _splitmix(h: int, v: int) -> int:
    h = (h + v + 0x9E3779B97F4A7C15) & _MASK
    z = h
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def stream(seed: int, *path: int) -> np.random.Generator:
    """Independent generator for the substream keyed by ``(seed, *path)``."""
    h = _splitmix(0, seed & _MASK)
    for p in path:
        h = _splitmix(h, p & _MASK)
    key = np.array([seed & _MASK, h], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def derive(seed: int, *path: int) -> int:
    """Derived integer seed for an independent sub-experiment."""
    h = _splitmix(0, seed & _MASK)
    for p in path:
        h = _splitmix(h, p & _MASK)
    return int(h)
