"""Counter-based Gaussian streams.

Each variate is a pure function of (seed, stream, step, component), so any
subset of paths can be generated in any order or process with identical
results.
"""
from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_STEP = np.uint64(0xD1B54A32D192ED03)


def mix64(z):
    """SplitMix64 finaliser on uint64 arrays (wrapping arithmetic)."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def stream_keys(seed: int, streams):
    s = mix64(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))
    with np.errstate(over="ignore"):
        return mix64(s + np.asarray(streams, dtype=np.uint64) * _GOLDEN)


def uniforms(keys, step: int, dim: int):
    """Open-interval uniforms of shape (len(keys), dim) for one time step."""
    ctr = np.uint64(step) * np.uint64(dim) + np.arange(dim, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = mix64(keys[:, None] ^ ((ctr[None, :] + np.uint64(1)) * _STEP))
    return ((z >> np.uint64(11)).astype(np.float64) + 0.5) * (1.0 / 9007199254740992.0)


def normals(keys, step: int, dim: int):
    return ndtri(uniforms(keys, step, dim))


class PathStreams:
    """Gaussian increments for paths ``[start, stop)``.

    With ``antithetic`` the paths 2j and 2j+1 share stream j with opposite signs.
    """

    def __init__(self, seed: int, start: int, stop: int, dim: int, antithetic=False):
        self.dim = dim
        paths = np.arange(start, stop, dtype=np.int64)
        if antithetic:
            self.keys = stream_keys(seed, paths // 2)
            self.sign = np.where(paths % 2 == 0, 1.0, -1.0)[:, None]
        else:
            self.keys = stream_keys(seed, paths)
            self.sign = None

    def increments(self, step: int, dt: float):
        z = normals(self.keys, step, self.dim)
        if self.sign is not None:
            z = z * self.sign
        return np.sqrt(dt) * z
