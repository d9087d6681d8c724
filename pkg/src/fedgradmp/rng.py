"""Deterministic random streams keyed by (seed, purpose, round, client)."""
import zlib

import numpy as np


def _tag(purpose):
    return zlib.crc32(purpose.encode("utf-8"))


def stream(seed, purpose, *keys):
    """Return an independent ``np.random.Generator`` for one use site.

    The same ``(seed, purpose, *keys)`` always produces the same generator, and
    distinct keys produce statistically independent streams, so client work can
    run in any order (or in parallel) without changing results.
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, _tag(purpose)]
    entropy.extend(int(k) for k in keys)
    return np.random.default_rng(np.random.SeedSequence(entropy))
