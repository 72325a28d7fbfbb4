from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

NORMALIZATION_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Distribution:
    """A normalized probability vector over an ordered support.

    The support is usually the threshold grid (hence the `thetas` alias) but
    may hold strength values or utterance labels.
    """

    support: tuple
    probs: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float)
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "support", tuple(self.support))
        if probs.ndim != 1 or len(probs) != len(self.support):
            raise ValueError("support and probs must be 1-D and of equal length")
        if not np.all(np.isfinite(probs)) or np.any(probs < 0):
            raise ValueError("probabilities must be finite and nonnegative")
        if abs(probs.sum() - 1.0) > NORMALIZATION_TOL:
            raise ValueError(f"probabilities sum to {probs.sum()!r}, not 1")

    @property
    def thetas(self) -> tuple:
        return self.support

    @classmethod
    def from_weights(cls, support: Sequence[Any], weights) -> "Distribution":
        w = np.asarray(weights, dtype=float)
        total = w.sum()
        if not total > 0:
            raise ValueError("weights have no positive mass")
        return cls(tuple(support), w / total)

    @classmethod
    def uniform(cls, support: Sequence[Any]) -> "Distribution":
        n = len(support)
        return cls(tuple(support), np.full(n, 1.0 / n))

    def mean(self) -> float:
        return float(np.dot(np.asarray(self.support, dtype=float), self.probs))

    def mode(self):
        return self.support[int(np.argmax(self.probs))]

    def as_dict(self) -> dict:
        return dict(zip(self.support, self.probs.tolist()))

    def allclose(self, other: "Distribution", atol: float = 0.0) -> bool:
        return self.support == other.support and bool(np.allclose(self.probs, other.probs,
                                                                  rtol=0.0, atol=atol))
