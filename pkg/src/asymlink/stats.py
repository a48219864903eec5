"""Estimates with standard errors and their comparison."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Estimate:
    value: float
    std_error: float
    n_samples: int

    def __post_init__(self):
        if self.std_error < 0:
            raise ValueError("standard error must be non-negative")

    @classmethod
    def from_samples(cls, samples, scale: float = 1.0) -> "Estimate":
        """Mean of i.i.d. samples times ``scale`` with its standard error."""
        x = np.asarray(samples, dtype=float).ravel()
        if len(x) == 0:
            raise ValueError("no samples")
        mean = math.fsum(x) / len(x)
        sd = float(np.std(x, ddof=1)) if len(x) > 1 else 0.0
        return cls(scale * mean, abs(scale) * sd / math.sqrt(len(x)), len(x))

    def __neg__(self) -> "Estimate":
        return Estimate(-self.value, self.std_error, self.n_samples)

    def scaled(self, c: float) -> "Estimate":
        return Estimate(c * self.value, abs(c) * self.std_error, self.n_samples)

    def as_dict(self) -> dict:
        return {"value": self.value, "std_error": self.std_error, "n_samples": self.n_samples}


def combined_sigma(a: Estimate, b: Estimate) -> float:
    return math.hypot(a.std_error, b.std_error)


def agree(a: Estimate, b: Estimate, k: float = 2.0) -> bool:
    """|a - b| <= k * sqrt(sa^2 + sb^2) for independent estimates."""
    return abs(a.value - b.value) <= k * combined_sigma(a, b)
