"""Counter-based uniform streams.

Every replication owns a stream addressed by ``(key, rep)``; the uniform
used at step ``t`` is a pure function of ``(key, rep, t)``.  Batches can
therefore be split across workers in any way without changing a single
draw.  The generator is SplitMix64 (Steele, Lea & Flood 2014) evaluated
at explicit counters, vectorised over replications.
"""

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TO_UNIT = 2.0 ** -53


def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def stream_key(seed, *tags):
    """Derive a 64-bit stream key from a u64 seed and 32-bit integer tags.

    The entropy words carry the tag count, since SeedSequence alone maps
    ``[a, b]`` and ``[a, b, 0]`` to the same state.
    """
    seed = int(seed)
    if not 0 <= seed < 2 ** 64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    tags = [int(t) for t in tags]
    if any(not 0 <= t < 2 ** 32 for t in tags):
        raise ValueError(f"stream tags must be unsigned 32-bit integers, got {tags}")
    words = [seed & 0xFFFFFFFF, seed >> 32, len(tags), *tags]
    return np.random.SeedSequence(words).generate_state(1, dtype=np.uint64)[0]


def rep_states(key, reps):
    """Per-replication SplitMix64 states for replication indices ``reps``."""
    reps = np.asarray(reps, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix64(np.uint64(key) + (reps + np.uint64(1)) * _GAMMA)


def uniforms(states, step):
    """Uniforms on [0, 1) for every stream in ``states`` at counter ``step``."""
    with np.errstate(over="ignore"):
        z = _mix64(states + np.uint64(step + 1) * _GAMMA)
    return (z >> np.uint64(11)).astype(np.float64) * _TO_UNIT


def uniform_block(states, start, count):
    """Uniforms for counters ``start .. start + count - 1``, shape ``(len(states), count)``."""
    steps = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = _mix64(states[:, None] + steps[None, :] * _GAMMA)
    return (z >> np.uint64(11)).astype(np.float64) * _TO_UNIT
