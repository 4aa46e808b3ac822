"""Seedable, splittable random streams on top of the Philox counter-based generator.

Every random draw in the package flows through an :class:`RngStream`.  A stream
is identified by a root seed plus a path of labels, and child streams are
derived by hashing, so the draws consumed by one logical operation (one
iteration's grid, one iteration's ball perturbations, ...) never depend on what
any other operation consumed.  Batches are generated in a single vectorized
call with a fixed layout, which keeps results bitwise identical regardless of
how the consuming computation is ordered or parallelized.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _derive_key(seed, path):
    payload = repr((int(seed),) + tuple(path)).encode()
    digest = hashlib.sha256(payload).digest()
    return np.frombuffer(digest[:16], dtype=np.uint64)


class RngStream:
    """A named substream of a counter-based random generator."""

    def __init__(self, seed, path=()):
        self.seed = int(seed)
        self.path = tuple(path)
        self._gen = None

    def child(self, *labels) -> "RngStream":
        """Derive an independent substream labelled by ``labels``."""
        return RngStream(self.seed, self.path + labels)

    @property
    def gen(self) -> np.random.Generator:
        """The numpy Generator for this stream (created lazily, used once)."""
        if self._gen is None:
            key = _derive_key(self.seed, self.path)
            self._gen = np.random.Generator(np.random.Philox(key=key))
        return self._gen

    def __repr__(self):
        return f"RngStream(seed={self.seed}, path={self.path})"
