"""Splittable, counter-based random streams.

Every stream is a Philox generator keyed by a hash of ``(seed, path)``, so a
child stream such as ``rng.child("table", 3)`` is addressable without
consuming any draws from its parent. Streams derived from distinct paths are
independent and reproducible across runs and platforms.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key(seed: int, path: tuple) -> np.ndarray:
    h = hashlib.blake2b(repr((int(seed), path)).encode(), digest_size=16).digest()
    return np.frombuffer(h, dtype="<u8").copy()


class Rng:
    """Single-owner random stream; never share one instance between workers."""

    __slots__ = ("seed", "path", "gen")

    def __init__(self, seed: int, path: tuple = ()):
        if not isinstance(seed, (int, np.integer)) or isinstance(seed, bool):
            raise TypeError(f"seed must be an int, got {type(seed).__name__}")
        self.seed = int(seed)
        self.path = tuple(path)
        self.gen = np.random.Generator(np.random.Philox(key=_key(self.seed, self.path)))

    def child(self, *ids) -> "Rng":
        """Independent stream addressed by ``ids`` below this one."""
        for i in ids:
            if not isinstance(i, (int, str, np.integer)):
                raise TypeError(f"stream ids must be int or str, got {i!r}")
        return Rng(self.seed, self.path + tuple(int(i) if isinstance(i, np.integer) else i for i in ids))

    # thin pass-throughs for the draws the generator stages use
    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.gen.normal(loc, scale, size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.gen.uniform(low, high, size)

    def integers(self, low, high=None, size=None, endpoint=False):
        return self.gen.integers(low, high, size, endpoint=endpoint)

    def random(self, size=None):
        return self.gen.random(size)

    def exponential(self, scale=1.0, size=None):
        return self.gen.exponential(scale, size)

    def choice(self, a, size=None, replace=True, p=None):
        return self.gen.choice(a, size=size, replace=replace, p=p)

    def permutation(self, x):
        return self.gen.permutation(x)

    def dirichlet(self, alpha, size=None):
        return self.gen.dirichlet(alpha, size)

    def __repr__(self):
        return f"Rng(seed={self.seed}, path={self.path!r})"


def as_rng(seed_or_rng) -> Rng:
    if isinstance(seed_or_rng, Rng):
        return seed_or_rng
    return Rng(seed_or_rng)
