"""Named random sub-streams derived from a single root seed."""
import zlib

import numpy as np


def _key(part):
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("stream key parts must be nonnegative")
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


def seed_sequence(root_seed, *path):
    return np.random.SeedSequence(entropy=int(root_seed), spawn_key=tuple(_key(p) for p in path))


def stream(root_seed, *path):
    """Generator for the sub-stream ``path`` of ``root_seed``.

    Streams with different paths are statistically independent, so a stage
    can be toggled without shifting the draws seen by any other stage.
    """
    return np.random.default_rng(seed_sequence(root_seed, *path))


def derive_seed(root_seed, *path):
    """A plain integer seed for the sub-stream, for APIs that take ints."""
    return int(seed_sequence(root_seed, *path).generate_state(1, dtype=np.uint32)[0])


def as_generator(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
