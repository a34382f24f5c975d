"""Seeded randomness.

Every random draw comes from a Philox (counter-based) generator keyed by the
SHA-256 digest of ``"<seed>/<tag>/..."``, so a (seed, purpose) pair names the
same stream on any platform and streams for different purposes never overlap.
"""
import hashlib

import numpy as np


def key_for(seed, *tags):
    text = "/".join([str(int(seed)), *(str(t) for t in tags)])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return np.frombuffer(digest[:16], dtype="<u8").astype(np.uint64)


def generator(seed, *tags):
    """Return a fresh ``numpy.random.Generator`` for ``(seed, *tags)``."""
    return np.random.Generator(np.random.Philox(key=key_for(seed, *tags)))


def child_seed(seed, *tags):
    """Derive a 32-bit integer seed for APIs that only accept integers."""
    return int(key_for(seed, *tags)[0] & np.uint64(0xFFFFFFFF))
