"""
Seeded, splittable random streams.

A stream is identified by a 64-bit seed and a path of integer keys
(seed -> epoch -> batch -> prefix, ...). Each identity maps to a fresh
counter-based Philox generator, so work scheduled on derived streams
reproduces the sequential result regardless of execution order.
"""

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Any

import numpy as np

from core.exceptions import InvalidArgumentError

MAX_SEED = 2**64


class Stream(IntEnum):
    """Top-level keys under which the pipeline derives its streams."""

    WORLD = 1
    DATA = 2
    TEACHER = 3
    GENERATOR = 4
    STUDENT = 5
    PROMPTER = 6
    SYNTHESIS = 7
    BASELINE = 8
    EVAL = 9


@dataclass(frozen=True)
class RngStream:
    """
    Identity of a reproducible random stream.

    Attributes
    ----------
    seed : int
        Root seed in ``[0, 2**64)``.
    path : tuple[int, ...]
        Hierarchical derivation keys below the root.
    """

    seed: int
    path: tuple[int, ...] = field(default=())

    def __post_init__(self) -> None:
        if not 0 <= self.seed < MAX_SEED:
            raise InvalidArgumentError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if any(key < 0 for key in self.path):
            raise InvalidArgumentError(f"stream path keys must be non-negative, got {self.path}")

    def child(self, *keys: int) -> "RngStream":
        """Derive a sub-stream by appending ``keys`` to the path."""
        return RngStream(self.seed, self.path + tuple(int(key) for key in keys))

    def generator(self) -> np.random.Generator:
        """Return a fresh generator positioned at the start of this stream."""
        sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
        return np.random.Generator(np.random.Philox(sequence))

    def to_dict(self) -> dict[str, Any]:
        return {"seed": self.seed, "path": list(self.path)}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RngStream":
        return cls(int(data["seed"]), tuple(int(key) for key in data["path"]))
