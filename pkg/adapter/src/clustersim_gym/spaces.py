"""Minimal space descriptors following the standard RL environment convention."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Box:
    low: float
    high: float
    shape: tuple[int, ...]
    dtype: type = np.float64

    def contains(self, x) -> bool:
        arr = np.asarray(x)
        return (arr.shape == self.shape
                and bool(np.all(np.isfinite(arr)))
                and bool(np.all(arr >= self.low))
                and bool(np.all(arr <= self.high)))

    def sample(self, rng: np.random.Generator | None = None) -> np.ndarray:
        rng = rng or np.random.default_rng()
        return rng.uniform(self.low, self.high, size=self.shape).astype(self.dtype)


@dataclass(frozen=True)
class Discrete:
    n: int

    def contains(self, x) -> bool:
        try:
            value = int(x)
        except (TypeError, ValueError):
            return False
        return 0 <= value < self.n

    def sample(self, rng: np.random.Generator | None = None) -> int:
        rng = rng or np.random.default_rng()
        return int(rng.integers(0, self.n))
