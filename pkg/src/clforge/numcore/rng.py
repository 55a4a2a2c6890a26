from __future__ import annotations

import numpy as np


class Rng:
    """Seeded PCG64 stream; ``child(*keys)`` derives independent sub-streams.

    Children depend only on (seed, keys), never on how much the parent was
    consumed, so adding a draw in one component cannot shift another.
    """

    def __init__(self, seed: int, keys: tuple = ()):
        self.seed = int(seed)
        self.keys = tuple(int(k) for k in keys)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.keys)
        self.gen = np.random.Generator(np.random.PCG64(ss))

    def child(self, *keys: int) -> "Rng":
        return Rng(self.seed, self.keys + tuple(keys))

    # thin conveniences
    def permutation(self, n: int) -> np.ndarray:
        return self.gen.permutation(n)

    def choice(self, n: int, size: int, replace: bool = False) -> np.ndarray:
        return self.gen.choice(n, size=size, replace=replace)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size=size)

    def random(self, size=None):
        return self.gen.random(size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.gen.normal(loc, scale, size)
