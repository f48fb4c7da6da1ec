"""Seeded random streams for Monte Carlo rollouts.

Every draw is addressed by ``(seed, key)`` plus a trial index.  A key names
one decision slot (robot, step, slot kind, ...) and maps through
``SeedSequence(seed, spawn_key=key)`` to an independent Philox stream; trial
``i`` reads position ``i`` of that stream.  The value a trial sees therefore
depends only on its own coordinates, not on how many trials run or in which
groups they are evaluated.
"""

from __future__ import annotations

import numpy as np

SLOT_INIT = 0
SLOT_ACTION = 1
SLOT_TRANSITION = 2
SLOT_EPS = 3
SLOT_ASSIGN = 4


def generator(seed: int, key: tuple[int, ...]) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def uniforms(seed: int, key: tuple[int, ...], n: int) -> np.ndarray:
    """First ``n`` uniforms of the stream named ``key``; prefix-stable in ``n``."""
    return generator(seed, key).random(n)


def at(seed: int, key: tuple[int, ...], trials: np.ndarray) -> np.ndarray:
    """Uniforms of stream ``key`` at the given trial positions."""
    trials = np.asarray(trials, dtype=np.int64)
    if trials.size == 0:
        return np.zeros(0)
    return uniforms(seed, key, int(trials.max()) + 1)[trials]
