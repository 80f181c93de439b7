"""Counter-based random streams keyed by (seed, step, purpose).

Replica pairs in the paired-run diagnostics must share the data-order
stream while drawing independent noise, so every draw site opens its own
stream instead of advancing a global generator.  Streams are Philox
generators keyed by a hash of the identifying tuple: the same key always
reproduces the same draws, independent of call order or worker count.
"""

import hashlib

import numpy as np


def stream(seed: int, step: int, purpose: str) -> np.random.Generator:
    """Return a fresh generator for one (seed, step, purpose) event."""
    tag = f"{seed}:{step}:{purpose}".encode()
    digest = hashlib.blake2s(tag, digest_size=16).digest()
    key = np.frombuffer(digest, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
