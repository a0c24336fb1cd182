"""Seed derivation keyed by (seed, repetition, purpose)."""

import zlib

import numpy as np


def _key(part):
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    return zlib.crc32(str(part).encode("utf-8"))


def derive_seed(seed, *keys):
    """Return a 63-bit integer seed derived from ``seed`` and ``keys``.

    Keys may be integers or strings. The mapping depends only on its
    arguments, so repetitions run in any order (or in parallel) see the
    same streams.
    """
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1),
                                spawn_key=tuple(_key(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def make_rng(seed, *keys):
    """A ``numpy.random.Generator`` for the stream ``(seed, *keys)``."""
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1),
                                spawn_key=tuple(_key(k) for k in keys))
    return np.random.default_rng(ss)
