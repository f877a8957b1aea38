"""Keyed counter-based uniform generation.

Every random quantity in the environment is a pure function of a 64-bit
key built from (master_seed, replica_id, n, x).  The key is avalanched
with the splitmix64 finalizer, so distinct index tuples give
statistically independent uniforms and the same tuple always gives the
same bits, on any platform.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
# (h >> 11) * 2^-53 + 2^-54 lies strictly inside (0, 1)
_U53 = 1.0 / 9007199254740992.0
_HALF_ULP = 0.5 / 9007199254740992.0
_S11 = np.uint64(11)


def mix64(z):
    """splitmix64 finalizer; accepts scalars or uint64 arrays.

    uint64 arithmetic wraps by design; the errstate guard silences
    numpy's scalar overflow warnings for the intended wraparound.
    """
    with np.errstate(over="ignore"):
        z = np.asarray(z, dtype=np.uint64) + _GOLDEN
        z = z ^ (z >> _S30)
        z = z * _M1
        z = z ^ (z >> _S27)
        z = z * _M2
        z = z ^ (z >> _S31)
    return z[()] if z.ndim == 0 else z


def u64(value: int) -> np.uint64:
    """Two's-complement cast of a Python int to uint64."""
    return np.uint64(np.int64(value).view(np.uint64))


def site_keys(base_n: np.uint64, xs: np.ndarray) -> np.ndarray:
    """Keys for a row of lattice sites at fixed (seed, replica, n)."""
    with np.errstate(over="ignore"):
        ux = xs.astype(np.int64).view(np.uint64)
        keyed = base_n ^ ux
    return mix64(keyed)


def keys_to_uniform(keys: np.ndarray) -> np.ndarray:
    """Map 64-bit keys to doubles strictly inside (0, 1)."""
    return (keys >> _S11).astype(np.float64) * _U53 + _HALF_ULP


def derive_rng(master_seed: int, *tags: int) -> np.random.Generator:
    """Deterministic generator for Monte Carlo helpers keyed by tags."""
    return np.random.default_rng(np.random.SeedSequence([master_seed & 0xFFFFFFFFFFFFFFFF, *[t & 0xFFFFFFFFFFFFFFFF for t in tags]]))
