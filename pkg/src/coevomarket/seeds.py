"""Deterministic seed derivation for independent RNG streams.

Every stochastic component of a session (each trader, each order
schedule, the poll selector) gets its own ``random.Random`` seeded by
hashing the master seed together with a label path.  Streams are then
independent of each other's consumption order, which is what makes
whole sessions reproducible byte-for-byte from a single integer seed.
"""

import hashlib


def derive_seed(*parts) -> int:
    """Hash a master seed and a sequence of labels into a child seed.

    Parts may be ints or strings; they are joined unambiguously before
    hashing so ("a", 1) and ("a1",) give different streams.
    """
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        token = f"{type(part).__name__}:{part}"
        h.update(token.encode("utf8"))
        h.update(b"\x00")
    return int.from_bytes(h.digest(), "big")
