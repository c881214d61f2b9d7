"""Shared helpers: deterministic seed derivation for parallel-safe pipelines."""

import numpy as np


def derive_rng(seed, *key):
    """Generator for a (seed, *key) path.

    Derivation goes through ``np.random.SeedSequence`` so that workers
    processing different keys produce streams that are independent of each
    other and of the iteration order.  Keys must be non-negative integers.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), *[int(k) for k in key]]))


def derive_seed(seed, *key):
    """Collapse a (seed, *key) path into a single 64-bit child seed."""
    ss = np.random.SeedSequence([int(seed), *[int(k) for k in key]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])
