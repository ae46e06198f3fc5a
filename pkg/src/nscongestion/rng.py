"""Counter-based random streams.

Every random number used by the learner is addressed by ``(seed, slot, n)``:
the Philox stream keyed by ``(seed, n)`` is read at position ``slot``. Player
``i`` reads slot ``i`` at iteration ``n``; the asynchronous player selection
reads slot ``N``. Because a value depends only on its address, rows can be
processed in any order or in parallel without changing results.
"""

import numpy as np

MASK64 = (1 << 64) - 1


def iteration_uniforms(seed: int, iteration: int, count: int) -> np.ndarray:
    """Uniforms in [0, 1) for slots ``0 .. count-1`` of iteration ``iteration``."""
    if not 0 <= seed <= MASK64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    key = np.array([seed, iteration & MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key)).random(count)


def slot_uniform(seed: int, iteration: int, slot: int) -> float:
    """Single addressed draw; equals ``iteration_uniforms(seed, iteration, slot + 1)[slot]``."""
    return float(iteration_uniforms(seed, iteration, slot + 1)[slot])
