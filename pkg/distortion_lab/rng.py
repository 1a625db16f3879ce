"""
Named random streams derived from one run seed.

Each consumer (parameter init, shuffling, attacks, evaluation, surfaces, data
generation) gets its own stream, so turning one feature on never shifts the
random numbers seen by another.
"""
import zlib

import numpy as np

STREAMS = ("init", "shuffle", "attack", "eval", "surface", "data")


def _stream_id(name: str) -> int:
    if name not in STREAMS:
        raise ValueError(f"Unknown random stream '{name}', expected one of {', '.join(STREAMS)}")
    return zlib.crc32(name.encode("ascii"))


def stream(seed: int, name: str, *indices: int) -> np.random.Generator:
    """Generator for stream `name`, optionally keyed by (epoch, batch, ...) indices."""
    entropy = [int(seed), _stream_id(name), *[int(i) for i in indices]]
    return np.random.default_rng(np.random.SeedSequence(entropy))
