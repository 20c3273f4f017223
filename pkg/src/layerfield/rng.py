"""Counter-based deterministic random streams.

Ordinary stateful generators make output depend on evaluation order, which
breaks bit-identical rendering across tile sizes and worker counts.  Instead
every random draw here is a pure function of a 64-bit key (hashed from seed,
camera, pixel, layer, evaluation frame, ...) and a draw counter.  The hash is
the splitmix64 finalizer; all arithmetic is exact uint64 wrap-around, so the
numpy path and any compiled path agree bit for bit.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_KEY0 = 0x243F6A8885A308D3  # pi fractional bits, arbitrary nonzero start


def mix64(x: int) -> int:
    """splitmix64 finalizer on a python int, exact mod 2**64."""
    z = (x + _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def key_from(*parts: int) -> int:
    """Fold integer identifiers into a single stream key."""
    k = _KEY0
    for p in parts:
        k = mix64(k ^ (int(p) & _MASK))
    return k


def _mix64_u64(z: np.ndarray) -> np.ndarray:
    # numpy uint64 twin of mix64, vectorized; wrap-around is intentional
    with np.errstate(over="ignore"):
        z = (z + np.uint64(_GOLDEN)).astype(np.uint64)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        return z ^ (z >> np.uint64(31))


def uniforms(key: int, counters: np.ndarray) -> np.ndarray:
    """Map (key, counter) pairs to float64 uniforms in [0, 1).

    counters: any integer array; distinct counters give independent draws.
    Uses the high 53 bits of the hash, so results are exact dyadics.
    """
    c = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(key) ^ (c * np.uint64(_GOLDEN) + np.uint64(_MIX2))
    h = _mix64_u64(z)
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def uniforms_keys(keys: np.ndarray, counters: np.ndarray) -> np.ndarray:
    """Vectorized over both keys and counters (broadcast together)."""
    k = np.asarray(keys, dtype=np.uint64)
    c = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = k ^ (c * np.uint64(_GOLDEN) + np.uint64(_MIX2))
    h = _mix64_u64(z)
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def key_array(base: int, parts: np.ndarray) -> np.ndarray:
    """key_from(base_parts..., p) for an array of final parts p."""
    p = np.asarray(parts, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix64_u64(np.uint64(base) ^ p)
