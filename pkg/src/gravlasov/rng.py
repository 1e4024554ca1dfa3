"""Counter-based random streams.

Every random draw in the package is addressed by ``(seed, purpose, index)``.
A stream for one purpose is a Philox generator keyed on the master seed and
the purpose tag; particle ``i`` owns a fixed block of raw 64-bit words in it.
Any slice of particles can therefore be generated independently, and the
result never depends on how the work was chunked.
"""

from __future__ import annotations

import numpy as np

__all__ = ["PURPOSES", "WORDS_PER_INDEX", "stream_key", "uniform_block"]

PURPOSES = {
    "ensemble": 1,
    "oracle": 2,
    "test": 3,
}

# Philox emits 4 words per counter increment; keep blocks aligned to that.
WORDS_PER_INDEX = 8


def stream_key(seed: int, purpose: str) -> np.ndarray:
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    tag = PURPOSES[purpose]
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, int(seed) >> 32, tag])
    return ss.generate_state(2, np.uint64)


def uniform_block(seed: int, purpose: str, start: int, count: int) -> np.ndarray:
    """Uniforms on [0, 1) for indices ``start .. start+count-1``.

    Returns an array of shape ``(count, WORDS_PER_INDEX)``; row ``j`` depends
    only on ``(seed, purpose, start + j)``.
    """
    if start < 0 or count < 0:
        raise ValueError("start and count must be nonnegative")
    bg = np.random.Philox(key=stream_key(seed, purpose))
    if start:
        bg.advance(start * WORDS_PER_INDEX // 4)
    raw = bg.random_raw(count * WORDS_PER_INDEX)
    u = (raw >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)
    return u.reshape(count, WORDS_PER_INDEX)
