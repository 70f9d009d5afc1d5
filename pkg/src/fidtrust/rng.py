"""Seeded, counter-based random streams.

Every random draw in the package comes from a Philox4x64-10 generator
(``numpy.random.Philox``) whose 128-bit key is derived from a tuple of
non-negative integers::

    key = BLAKE2b(digest_size=16, person=b"fidtrust-stream")(
        b"".join(uint64_le(v) for v in (seed, *stream_ids))
    )

interpreted as two little-endian uint64 words. The counter starts at zero.
A stream is therefore fully named by ``(seed, *stream_ids)``, e.g.
``(seed, image_index, draw_index)``, and never depends on how many other
streams were consumed before it or on thread scheduling.

String labels (experiment conditions) are mapped to 64-bit seeds with
:func:`derive_seed`, which hashes the parent seed and the UTF-8 label the same
way. Reference vectors for both functions live in ``tests/data``.
"""

from __future__ import annotations

import hashlib
import secrets
import struct

import numpy as np

_PERSON = b"fidtrust-stream"
_MASK64 = (1 << 64) - 1


def _u64(v: int) -> bytes:
    if v < 0 or v > _MASK64:
        raise ValueError(f"stream id {v} does not fit in an unsigned 64-bit word")
    return struct.pack("<Q", v)


def stream_key(seed: int, *stream_ids: int) -> np.ndarray:
    payload = b"".join(_u64(int(v)) for v in (seed, *stream_ids))
    digest = hashlib.blake2b(payload, digest_size=16, person=_PERSON).digest()
    return np.frombuffer(digest, dtype="<u8").astype(np.uint64)


def stream(seed: int, *stream_ids: int) -> np.random.Generator:
    """Generator for the stream named by ``(seed, *stream_ids)``."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, *stream_ids)))


def derive_seed(seed: int, label: str) -> int:
    """64-bit child seed for a textual label (condition name, role, ...)."""
    payload = _u64(int(seed)) + label.encode("utf-8")
    digest = hashlib.blake2b(payload, digest_size=8, person=_PERSON).digest()
    return struct.unpack("<Q", digest)[0]


def fresh_seed() -> int:
    """Random seed for runs where none was given; callers must report it."""
    return secrets.randbits(63)
