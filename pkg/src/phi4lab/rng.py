"""Counter-based random streams keyed by (seed, chain, step, tag).

Each key selects a Philox stream with its own 128-bit key; the step index sits
in a high counter word so streams for different steps never overlap.  Draws
depend only on the key, never on thread count or call order.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

# Tags separating the independent uses of one (seed, chain, step) triple.
TAG_NOISE = 0
TAG_INITIAL = 1
TAG_PROPOSAL = 2
TAG_ACCEPT = 3
TAG_MISC = 4


@lru_cache(maxsize=4096)
def _key(seed: int, chain: int, tag: int) -> tuple[int, int]:
    k = np.random.SeedSequence([seed & 0xFFFFFFFF, chain, tag]).generate_state(2, dtype=np.uint64)
    return int(k[0]), int(k[1])


def stream(seed: int, chain: int = 0, step: int = 0, tag: int = 0) -> np.random.Generator:
    key = np.array(_key(int(seed), int(chain), int(tag)), dtype=np.uint64)
    counter = np.array([0, 0, int(step) & 0xFFFFFFFFFFFFFFFF, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(counter=counter, key=key))


def normal(seed: int, chain: int, step: int, shape, tag: int = TAG_NOISE) -> np.ndarray:
    return stream(seed, chain, step, tag).standard_normal(shape)


def uniform(seed: int, chain: int, step: int, shape, tag: int = TAG_ACCEPT) -> np.ndarray:
    return stream(seed, chain, step, tag).random(shape)


def chain_normals(seed: int, chains, step: int, shape, tag: int = TAG_NOISE) -> np.ndarray:
    """Stack of independent normal draws, one per chain index in ``chains``."""
    return np.stack([normal(seed, c, step, shape, tag) for c in chains])
