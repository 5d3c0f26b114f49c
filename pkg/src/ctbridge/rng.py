"""Reproducible counter-based random streams.

Every stochastic routine derives its generator from an integer key tuple
through Philox, so a draw can be reproduced from its key alone without
replaying earlier draws.  Leading domain constants keep the sinogram-noise,
per-trajectory, and ensemble streams disjoint even for equal user seeds.
"""

from __future__ import annotations

import numpy as np

_SINOGRAM_DOMAIN = 0x51
_TRAJECTORY_DOMAIN = 0x52
_ENSEMBLE_DOMAIN = 0x53
_PHANTOM_DOMAIN = 0x54


def stream(*key: int) -> np.random.Generator:
    """Philox generator for an integer key tuple; same key, same stream."""
    if not key:
        raise ValueError("stream key must not be empty")
    if any(int(k) != k or k < 0 for k in key):
        raise ValueError("stream key must be non-negative integers")
    seq = np.random.SeedSequence(tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seed=seq))


def sinogram_stream(seed: int) -> np.random.Generator:
    return stream(_SINOGRAM_DOMAIN, seed)


def trajectory_stream(seed: int, trajectory: int, step: int) -> np.random.Generator:
    """Noise stream for one reverse step of one trajectory."""
    return stream(_TRAJECTORY_DOMAIN, seed, trajectory, step)


def ensemble_stream(seed: int, step: int) -> np.random.Generator:
    """Shared per-step stream for batched trajectories; row i belongs to
    trajectory i, so an ensemble is reproducible from (seed, step, size)."""
    return stream(_ENSEMBLE_DOMAIN, seed, step)


def phantom_stream(seed: int) -> np.random.Generator:
    return stream(_PHANTOM_DOMAIN, seed)
