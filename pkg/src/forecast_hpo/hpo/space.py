"""Search spaces and hyperparameter configurations."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

KINDS = ("log-uniform", "uniform", "integer")


@dataclass(frozen=True)
class Dimension:
    name: str
    kind: str
    lo: float
    hi: float

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown dimension kind {self.kind!r}; expected one of {KINDS}")
        if self.lo > self.hi:
            raise ValueError(f"dimension {self.name}: lo={self.lo} > hi={self.hi}")
        if self.kind == "log-uniform" and self.lo <= 0:
            raise ValueError(f"dimension {self.name}: log-uniform bounds must be positive")
        if self.kind == "integer" and (int(self.lo) != self.lo or int(self.hi) != self.hi):
            raise ValueError(f"dimension {self.name}: integer bounds must be integers")

    def sample(self, rng: np.random.Generator):
        if self.kind == "integer":
            return int(rng.integers(int(self.lo), int(self.hi) + 1))
        if self.kind == "log-uniform":
            return float(math.exp(rng.uniform(math.log(self.lo), math.log(self.hi))))
        return float(rng.uniform(self.lo, self.hi))

    def to_unit(self, value) -> float:
        if self.lo == self.hi:
            return 0.5
        if self.kind == "log-uniform":
            return (math.log(value) - math.log(self.lo)) / (math.log(self.hi) - math.log(self.lo))
        return (value - self.lo) / (self.hi - self.lo)

    def from_unit(self, u: float):
        u = min(max(float(u), 0.0), 1.0)
        if self.kind == "integer":
            return int(round(self.lo + u * (self.hi - self.lo)))
        if self.kind == "log-uniform":
            return float(math.exp(math.log(self.lo) + u * (math.log(self.hi) - math.log(self.lo))))
        return float(self.lo + u * (self.hi - self.lo))

    def contains(self, value) -> bool:
        if self.kind == "integer" and int(value) != value:
            return False
        return self.lo <= value <= self.hi


@dataclass(frozen=True)
class HyperparameterConfig:
    values: Mapping[str, Any]
    provenance: Mapping[str, Any] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(dict(self.values), sort_keys=True)

    def __getitem__(self, name):
        return self.values[name]


@dataclass(frozen=True)
class SearchSpace:
    dimensions: tuple[Dimension, ...]

    def __post_init__(self):
        object.__setattr__(self, "dimensions", tuple(self.dimensions))
        names = [d.name for d in self.dimensions]
        if len(set(names)) != len(names):
            raise ValueError("duplicate dimension names")

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.dimensions]

    def to_unit(self, values: Mapping[str, Any]) -> np.ndarray:
        return np.array([d.to_unit(values[d.name]) for d in self.dimensions])

    def from_unit(self, u: Sequence[float], **provenance) -> HyperparameterConfig:
        return HyperparameterConfig({d.name: d.from_unit(x) for d, x in zip(self.dimensions, u)}, provenance)

    def contains(self, values: Mapping[str, Any]) -> bool:
        return all(d.contains(values[d.name]) for d in self.dimensions)

    @classmethod
    def from_dict(cls, spec: Mapping[str, Sequence]) -> "SearchSpace":
        """{"name": [kind, lo, hi], ...}"""
        return cls(tuple(Dimension(name, kind, lo, hi) for name, (kind, lo, hi) in spec.items()))


def sample_configuration(space: SearchSpace, rng: np.random.Generator, **provenance) -> HyperparameterConfig:
    return HyperparameterConfig({d.name: d.sample(rng) for d in space.dimensions}, provenance)
