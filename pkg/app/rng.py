"""
Seedable random streams

Every stream is a numpy ``Generator`` over the counter-based Philox-4x64
bit generator. Sub-streams are keyed by SHA-256 of the command seed, a
purpose string and optional integer indices, so a component's randomness
does not depend on how many draws other components made or on which worker
thread runs it.
"""
import hashlib
from typing import Union

import numpy as np

SeedLike = Union[int, np.integer]

_UINT64_MASK = (1 << 64) - 1


def derive_seed(seed: SeedLike, purpose: str, *indices: int) -> int:
    """Derive a 64-bit sub-seed from (seed, purpose, indices)"""
    key = ":".join([str(int(seed)), purpose] + [str(int(i)) for i in indices])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & _UINT64_MASK


def make_rng(seed: SeedLike) -> np.random.Generator:
    """Create a Philox-backed generator from a 64-bit seed"""
    return np.random.Generator(np.random.Philox(int(seed) & _UINT64_MASK))


def derive_rng(seed: SeedLike, purpose: str, *indices: int) -> np.random.Generator:
    """Generator for the sub-stream keyed by (seed, purpose, indices)"""
    return make_rng(derive_seed(seed, purpose, *indices))
