"""Counter-based random streams.

Every stochastic routine in the package draws from a Philox generator keyed
by a hash of (seed, index, tag).  Streams are therefore pure functions of
their key: parallel and serial runs, and re-runs on other machines, produce
byte-identical draws.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["stream", "fanout_seed"]


def _digest(*parts) -> bytes:
    h = hashlib.blake2b(digest_size=16)
    for p in parts:
        if isinstance(p, str):
            b = p.encode("utf-8")
        elif isinstance(p, (int, np.integer)):
            b = int(p).to_bytes(16, "little", signed=False)
        else:
            raise TypeError(f"unhashable stream key part: {p!r}")
        h.update(len(b).to_bytes(4, "little"))
        h.update(b)
    return h.digest()


def stream(seed: int, tag: str, index: int = 0) -> np.random.Generator:
    """Deterministic Philox generator for (seed, tag, index)."""
    if not 0 <= int(seed) < 2**64:
        raise ValueError(f"seed must be a uint64, got {seed}")
    key = int.from_bytes(_digest(int(seed), tag, int(index)), "little")
    return np.random.Generator(np.random.Philox(key=key))


def fanout_seed(master_seed: int, label: str, index: int = 0) -> int:
    """Derive a child uint64 seed from (master seed, label, index)."""
    return int.from_bytes(_digest(int(master_seed), label, int(index))[:8], "little")
