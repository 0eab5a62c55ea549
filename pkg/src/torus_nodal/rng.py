"""Counter-based random streams.

Every stream is addressed by a 128-bit Philox key ``(seed, stream)``; draw
``j`` of a stream depends only on the key and ``j``, never on how many other
streams were consumed before it or on which worker produced it.
"""
from __future__ import annotations

import hashlib

import numpy as np
from scipy.special import ndtri

MASK64 = (1 << 64) - 1

# stream identifiers reserved by the package
STREAM_COEFFICIENTS = 0
STREAM_CUBE_POINTS = 1
KERNEL_STREAM_BASE = 1 << 32


def derive_seed(*parts: int) -> int:
    """Hash integers into a 64-bit seed (stable across platforms and runs)."""
    payload = b"".join(int(p).to_bytes(16, "little", signed=True) for p in parts)
    digest = hashlib.blake2b(payload, digest_size=8, person=b"torus-nodal").digest()
    return int.from_bytes(digest, "little")


def _bit_generator(seed: int, stream: int) -> np.random.Philox:
    key = np.array([int(seed) & MASK64, int(stream) & MASK64], dtype=np.uint64)
    return np.random.Philox(key=key)


def uniforms(seed: int, stream: int, n: int) -> np.ndarray:
    """``n`` doubles in the open interval (0, 1), 53 bits each."""
    raw = _bit_generator(seed, stream).random_raw(int(n))
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def normals(seed: int, stream: int, n: int) -> np.ndarray:
    """Standard normal draws by inverse CDF (no rejection loop)."""
    return ndtri(uniforms(seed, stream, n))
