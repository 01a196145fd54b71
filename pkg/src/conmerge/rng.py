"""Counter-based keyed random streams.

Every random draw in this package comes from a Philox stream whose key is
derived from a (seed, label) pair, so results never depend on iteration
order, chunking, or thread scheduling.  The stream position of a draw is
its element index, which is what makes per-element decisions (e.g. DARE
drops) reproducible under any parallel decomposition.
"""

import hashlib

import numpy as np


def derive_key(seed: int, label: str) -> np.ndarray:
    """Derive a 128-bit Philox key from an integer seed and a string label."""
    digest = hashlib.sha256(f"{seed}|{label}".encode("utf-8")).digest()
    return np.frombuffer(digest[:16], dtype=np.uint64).copy()


def keyed_generator(seed: int, label: str) -> np.random.Generator:
    """A fresh generator whose stream is fully determined by (seed, label)."""
    return np.random.Generator(np.random.Philox(key=derive_key(seed, label)))


def keyed_uniform(seed: int, label: str, n: int) -> np.ndarray:
    """n uniform draws in [0, 1); draw i is stream position i of the keyed stream."""
    return keyed_generator(seed, label).random(n, dtype=np.float64)


def keyed_normal(seed: int, label: str, n: int) -> np.ndarray:
    """n standard-normal draws from the keyed stream."""
    return keyed_generator(seed, label).standard_normal(n, dtype=np.float64)
