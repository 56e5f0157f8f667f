"""Conditioning signals.

A condition is what a conditional score field is evaluated against: nothing
(the unconditional token), a class index, a raw embedding vector, or a 2-D
grid mean (used by the mean-reverting SDE, where the grid doubles as the
reversion target).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Condition:
    """Tagged conditioning value. Use the constructors below, not __init__."""

    kind: str  # "null" | "class" | "embedding" | "grid_mean"
    label: int | None = None
    vector: np.ndarray | None = None

    @staticmethod
    def none() -> "Condition":
        return NULL

    @staticmethod
    def class_label(index: int) -> "Condition":
        if index < 0:
            raise ValueError(f"class index must be >= 0, got {index}")
        return Condition("class", label=int(index))

    @staticmethod
    def embedding(vector) -> "Condition":
        return Condition("embedding", vector=np.asarray(vector, dtype=float).ravel())

    @staticmethod
    def grid_mean(grid) -> "Condition":
        grid = np.asarray(grid, dtype=float)
        if grid.ndim != 2:
            raise ValueError(f"grid_mean expects a 2-D array, got shape {grid.shape}")
        return Condition("grid_mean", vector=grid)

    @property
    def is_null(self) -> bool:
        return self.kind == "null"

    def key(self):
        """Hashable identity used for de-duplication and tie-break ordering."""
        if self.kind == "null":
            return ("null",)
        if self.kind == "class":
            return ("class", self.label)
        return (self.kind, self.vector.shape, tuple(self.vector.ravel()))

    def __eq__(self, other):
        return isinstance(other, Condition) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())


NULL = Condition("null")
