"""Hierarchical random stream derivation.

Every random stream is identified by ``(seed, tag, *indices)`` so that adding
parallelism or reordering loops never changes which numbers a task sees.
"""
import zlib

import numpy as np


def _tag_key(tag):
    return zlib.crc32(tag.encode("utf-8"))


def derive_rng(seed, tag, *indices):
    """Return an independent ``numpy.random.Generator`` for ``(seed, tag, indices)``."""
    key = (_tag_key(tag),) + tuple(int(i) for i in indices)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


def check_random_state(random_state):
    """Coerce ``None``, an int, or a Generator into a ``numpy.random.Generator``."""
    if isinstance(random_state, np.random.Generator):
        return random_state
    if random_state is None or isinstance(random_state, (int, np.integer)):
        return np.random.default_rng(random_state)
    raise TypeError(f"cannot build a random generator from {random_state!r}")
