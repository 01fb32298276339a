from typing import List, Tuple

import numpy as np


_BLOCK_SIZE = 4096


class Rng:
    """
    Seeded random source built on the counter-based Philox generator.

    A stream is identified by the root seed and a spawn key. Children derive
    their own independent substreams, so parallel replicas can be replayed
    one at a time.
    """

    def __init__(self, seed: int, stream: Tuple[int, ...] = ()):
        self.seed = int(seed)
        self.stream = tuple(int(s) for s in stream)
        sequence = np.random.SeedSequence(self.seed, spawn_key=self.stream)
        self.generator = np.random.Generator(np.random.Philox(sequence))
        self._block = self.generator.random(_BLOCK_SIZE)
        self._pos = 0

    def child(self, index: int) -> "Rng":
        """Return substream `index` of this stream."""
        return Rng(self.seed, self.stream + (index,))

    def spawn(self, n: int) -> List["Rng"]:
        """Return the first `n` substreams."""
        return [self.child(i) for i in range(n)]

    def uniform(self) -> float:
        """Return one uniform draw in [0, 1)."""
        if self._pos == _BLOCK_SIZE:
            self._block = self.generator.random(_BLOCK_SIZE)
            self._pos = 0
        value = self._block[self._pos]
        self._pos += 1
        return float(value)

    def uniforms(self, n: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        """Return `n` uniform draws on [low, high)."""
        return self.generator.uniform(low, high, size=n)

    def poisson(self, lam: float) -> int:
        return int(self.generator.poisson(lam))

    def exponential(self, rate: float) -> float:
        return float(self.generator.exponential(1.0 / rate))

    def integers(self, high: int) -> int:
        """Return an integer in [0, high)."""
        return int(self.generator.integers(high))

    def describe(self) -> dict:
        return {"seed": self.seed, "stream": list(self.stream)}

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, stream={self.stream})"
