"""Counter-based random streams.

Every draw is a pure function of ``(seed, row, column key, draw index)``, so
rows can be generated in any order or in parallel and still reproduce the
same values. The mixer is the SplitMix64 finalizer applied as a hash chain.
"""

from __future__ import annotations

import zlib

import numpy as np
from scipy.special import ndtri

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def _mix(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = x + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def column_key(label: str) -> int:
    """Stable integer key for a column label."""
    return zlib.crc32(label.encode("utf-8"))


def uniforms(seed: int, rows, key: int, draw: int = 0) -> np.ndarray:
    """Uniform variates on the open interval (0, 1), one per row."""
    rows = np.asarray(rows, dtype=np.uint64)
    h = _mix(np.full(rows.shape, np.uint64(seed & _MASK)))
    h = _mix(h ^ rows)
    h = _mix(h ^ np.uint64(key & _MASK))
    h = _mix(h ^ np.uint64(draw & _MASK))
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * (1.0 / 9007199254740992.0)


def normals(seed: int, rows, key: int, draw: int = 0) -> np.ndarray:
    """Standard normal variates by inversion of :func:`uniforms`."""
    return ndtri(uniforms(seed, rows, key, draw))


def derive_seed(seed: int, *path: int) -> int:
    """Child seed for an independent replication, as a Python int."""
    h = np.array([seed & _MASK], dtype=np.uint64)
    h = _mix(h)
    for p in path:
        h = _mix(h ^ np.uint64(p & _MASK))
    return int(h[0] >> np.uint64(1))
