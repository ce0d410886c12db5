"""Counter-based random streams with named, reproducible substreams.

All randomness in the package flows from one 64-bit master seed. Substreams
are derived by hashing (seed, name), so results do not depend on the order
in which modules draw, nor on how work is split across workers.
"""

import hashlib

import numpy as np


def substream(seed, name):
    """Return a Philox generator for the named substream of ``seed``."""
    digest = hashlib.sha256(f"{int(seed)}:{name}".encode()).digest()
    key = int.from_bytes(digest[:16], "little")
    return np.random.Generator(np.random.Philox(key=key))


def child_seeds(seed, name, n):
    """Deterministic per-worker integer seeds (e.g. one per path block)."""
    return [
        int.from_bytes(
            hashlib.sha256(f"{int(seed)}:{name}:{i}".encode()).digest()[:8], "little"
        )
        for i in range(n)
    ]
