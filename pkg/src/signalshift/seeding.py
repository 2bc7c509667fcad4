"""Deterministic RNG streams derived from a single 64-bit seed.

Every random draw in the package goes through a PCG64 generator obtained
from `spawn_rng(seed, *path)`.  The path is a tuple of small integers that
names the consumer (scenario index, pipeline stage, ...), so two streams
with different paths are independent and adding a new consumer never
reshuffles the draws of an existing one.
"""

from __future__ import annotations

import numpy as np

# Stream namespaces used as the first path component.
NS_TRAIN_SET = 0
NS_TEST_VARIABILITY = 1
NS_TEST_VOLUME = 2
NS_DQN = 10
NS_META = 11

# Stage ids used as the last path component of scenario streams.
STAGE_PERTURB = 0
STAGE_ARRIVALS = 1


def spawn_rng(seed: int, *path: int) -> np.random.Generator:
    """Return a fresh Generator for stream `path` under the root `seed`."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.PCG64(ss))
