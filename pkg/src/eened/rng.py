"""Deterministic, named random streams on a counter-based generator.

Every source of randomness in the package (parameter init, dropout masks,
shuffling, splits, synthetic data) draws from a ``SeedStream`` so that a run is
fully determined by one integer seed, independent of call order between
unrelated components and stable across platforms.
"""

from __future__ import annotations

import hashlib

import numpy as np


class SeedStream:
    """A node in a tree of named random streams.

    ``child(name)`` derives an independent stream; ``generator()`` yields a
    numpy Generator backed by Philox, keyed by a hash of (seed, path).
    """

    __slots__ = ("seed", "path")

    def __init__(self, seed: int, path: tuple[str, ...] = ()):
        self.seed = int(seed)
        self.path = tuple(path)

    def child(self, name: str) -> "SeedStream":
        return SeedStream(self.seed, self.path + (str(name),))

    def key(self) -> int:
        ident = repr((self.seed, self.path)).encode("utf-8")
        digest = hashlib.sha256(ident).digest()
        return int.from_bytes(digest[:16], "little")

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=self.key()))

    def __repr__(self) -> str:
        return f"SeedStream(seed={self.seed}, path={'/'.join(self.path) or '.'})"
