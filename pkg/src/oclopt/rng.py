"""Deterministic random-stream derivation.

Every source of randomness in the package is a Philox4x64-10 counter-based
generator keyed by (seed, purpose, *indices) through numpy's SeedSequence.
Substreams are independent and random-access: the batch at time step t can
be regenerated without replaying steps 1..t-1, and the same (seed, path)
yields the identical stream on any platform.
"""

from __future__ import annotations

import numpy as np

# Purpose tags for substream derivation. Values are part of the on-disk
# reproducibility contract: changing them changes every generated stream.
STREAM = 0       # training batches, indexed by time step
EVAL = 1         # evaluation batches (same distribution, unseen draws)
HOLDOUT = 2      # per-step holdout routing coins
RESERVOIR = 3    # reservoir eviction decisions (sequential)
REPLAY = 4       # replay minibatch sampling (sequential)
VALIDATION = 5   # online-validation minibatch sampling (sequential)
INIT = 6         # model parameter initialization
NOISE = 7        # gradient-noise draws in theory simulations
MEANS = 8        # fixed class-mean layout for piecewise-task streams


def substream(seed: int, *path: int) -> np.random.Generator:
    """Return an independent Generator for the given (seed, path).

    Args:
        seed: experiment-level 64-bit seed.
        path: purpose tag plus optional indices (e.g. time step).
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def ball_uniform(rng: np.random.Generator, n: int, dim: int, radius: float) -> np.ndarray:
    """Draw n points uniformly from the closed Euclidean ball of given radius.

    Zero-mean and norm-bounded by construction, which is what the bounded
    gradient-noise model needs.
    """
    if radius == 0.0:
        return np.zeros((n, dim))
    dirs = rng.standard_normal((n, dim))
    norms = np.linalg.norm(dirs, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    dirs /= norms
    radii = radius * rng.random(n) ** (1.0 / dim)
    return dirs * radii[:, None]
