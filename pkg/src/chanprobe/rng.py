"""Reproducible counter-based random streams.

A stream is keyed by the pair (seed, stream): the same pair always replays
the same draws, and distinct pairs are statistically independent because the
pair is the key of a counter-based (Philox) generator whose counter is the
draw index. Workers must own disjoint stream indices. Library functions that
fan work out internally consume a documented contiguous range of offsets
above the stream they are handed; experiment drivers space instance streams
2**32 apart so those ranges never collide.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


@dataclass
class RngStream:
    seed: int
    stream: int = 0

    def __post_init__(self):
        self.seed = int(self.seed) & _MASK64
        self.stream = int(self.stream) & _MASK64
        self._gen = None

    def generator(self) -> np.random.Generator:
        """The underlying generator, positioned at the current draw index."""
        if self._gen is None:
            key = np.array([self.seed, self.stream], dtype=np.uint64)
            self._gen = np.random.Generator(np.random.Philox(key=key))
        return self._gen

    def uniform(self) -> float:
        """One float64 uniform on [0, 1); advances the draw index by one."""
        return float(self.generator().random())

    def uniforms(self, shape) -> np.ndarray:
        """Array of uniforms, drawn in C order from the same stream."""
        return self.generator().random(shape)

    def substream(self, offset: int) -> "RngStream":
        """Fresh stream at index stream+offset, starting from draw zero."""
        return RngStream(self.seed, (self.stream + int(offset)) & _MASK64)
