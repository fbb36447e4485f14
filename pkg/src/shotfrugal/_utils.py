import hashlib

import numpy as np


def derive_seed(*keys) -> int:
    """Stable 63-bit seed from a tuple of ints/strings.

    Strings are hashed with sha256 so the result does not depend on
    ``PYTHONHASHSEED``.
    """
    words = []
    for key in keys:
        if isinstance(key, (int, np.integer)):
            words.append(int(key) & 0xFFFFFFFFFFFFFFFF)
        else:
            digest = hashlib.sha256(str(key).encode("utf-8")).digest()
            words.append(int.from_bytes(digest[:8], "little"))
    state = np.random.SeedSequence(words).generate_state(2, dtype=np.uint32)
    return int(state[0]) | (int(state[1] & 0x7FFFFFFF) << 32)


def popcounts(n: int) -> np.ndarray:
    """Hamming weight of every index in ``range(2**n)``."""
    idx = np.arange(1 << n, dtype=np.int64)
    counts = np.zeros(1 << n, dtype=np.int64)
    for i in range(n):
        counts += (idx >> i) & 1
    return counts


def bits_of(x: int, n: int) -> np.ndarray:
    """Little-endian bit vector of index ``x`` (bit i is qubit/vertex i)."""
    return (int(x) >> np.arange(n)) & 1
