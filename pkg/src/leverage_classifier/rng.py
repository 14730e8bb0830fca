"""Seeded random streams.

Every random draw in the package goes through a ``numpy.random.Generator``
on the PCG64 bit generator.  Child streams are derived with
``SeedSequence.spawn``-style keys so independent experiments never share
state and results are reproducible across platforms.
"""

import numpy as np

ALGORITHM = "PCG64"


def make_rng(seed, *key) -> np.random.Generator:
    """Generator for ``seed`` and an optional derivation key.

    ``seed`` may be an int, a ``SeedSequence`` or an existing Generator (in
    which case it is returned unchanged and ``key`` must be empty).
    """
    if isinstance(seed, np.random.Generator):
        if key:
            raise ValueError("cannot derive a keyed stream from a live Generator")
        return seed
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, *key)))


def seed_sequence(seed, *key) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        entropy, base_key = seed.entropy, tuple(seed.spawn_key)
    else:
        entropy, base_key = int(seed), ()
    return np.random.SeedSequence(entropy, spawn_key=base_key + tuple(int(k) for k in key))


def derive_seed(seed, *key) -> int:
    """A 64-bit integer seed for the child stream ``key`` of ``seed``."""
    return int(seed_sequence(seed, *key).generate_state(1, dtype=np.uint64)[0])
