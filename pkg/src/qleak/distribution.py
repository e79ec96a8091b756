"""Finitely supported probability distributions."""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Callable, Hashable, Iterable, Mapping

NORMALIZATION_TOL = 1e-9


def parse_probability(value) -> float:
    """Convert a number or a decimal/rational string such as ``"1/3"`` to float."""
    if isinstance(value, bool):
        raise ValueError(f"not a probability: {value!r}")
    if isinstance(value, (int, float, Fraction)):
        p = float(value)
    elif isinstance(value, str):
        try:
            p = float(Fraction(value.strip()))
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"not a probability: {value!r}") from exc
    else:
        raise ValueError(f"not a probability: {value!r}")
    if not math.isfinite(p):
        raise ValueError(f"not a probability: {value!r}")
    return p


class Distribution:
    """Probability vector over an ordered, duplicate-free support.

    Outcomes may be any hashable values. Zero-weight outcomes are kept if
    given explicitly, so the support order stays what the caller declared.
    """

    __slots__ = ("support", "weights", "_index")

    def __init__(self, support: Iterable[Hashable], weights: Iterable[float]):
        self.support = tuple(support)
        self.weights = tuple(float(w) for w in weights)
        if len(self.support) != len(self.weights):
            raise ValueError("support and weights differ in length")
        self._index = {o: i for i, o in enumerate(self.support)}
        if len(self._index) != len(self.support):
            raise ValueError("support entries must be distinct")

    @classmethod
    def point(cls, outcome) -> "Distribution":
        return cls((outcome,), (1.0,))

    @classmethod
    def uniform(cls, outcomes: Iterable[Hashable]) -> "Distribution":
        outcomes = tuple(outcomes)
        return cls(outcomes, [1.0 / len(outcomes)] * len(outcomes))

    @classmethod
    def from_mapping(cls, mapping: Mapping[Hashable, float]) -> "Distribution":
        return cls(mapping.keys(), mapping.values())

    @classmethod
    def accumulate(cls, pairs: Iterable[tuple[Hashable, float]]) -> "Distribution":
        """Build a distribution summing weights of repeated outcomes."""
        acc: dict = {}
        for outcome, w in pairs:
            acc[outcome] = acc.get(outcome, 0.0) + w
        return cls.from_mapping(acc)

    def prob(self, outcome) -> float:
        i = self._index.get(outcome)
        return 0.0 if i is None else self.weights[i]

    def __getitem__(self, outcome) -> float:
        return self.prob(outcome)

    def __contains__(self, outcome) -> bool:
        return outcome in self._index

    def __iter__(self):
        return iter(self.support)

    def __len__(self) -> int:
        return len(self.support)

    def items(self):
        return zip(self.support, self.weights)

    def total(self) -> float:
        return math.fsum(self.weights)

    def is_normalized(self, tol: float = NORMALIZATION_TOL) -> bool:
        return abs(self.total() - 1.0) <= tol and min(self.weights, default=0.0) >= -tol

    def as_dict(self) -> dict:
        return dict(zip(self.support, self.weights))

    def positive(self, tol: float = 0.0) -> "Distribution":
        """Drop outcomes whose weight is <= ``tol``."""
        kept = [(o, w) for o, w in self.items() if w > tol]
        return Distribution([o for o, _ in kept], [w for _, w in kept])

    def map(self, fn: Callable[[Hashable], Hashable]) -> "Distribution":
        """Push the distribution forward through ``fn``."""
        return Distribution.accumulate((fn(o), w) for o, w in self.items())

    def max(self) -> float:
        return max(self.weights)

    def argmax(self):
        """Most likely outcome; ties go to the earliest in support order."""
        best = max(self.weights)
        return self.support[self.weights.index(best)]

    def isclose(self, other: "Distribution", tol: float = 1e-9) -> bool:
        keys = set(self.support) | set(other.support)
        return all(abs(self.prob(k) - other.prob(k)) <= tol for k in keys)

    def __repr__(self) -> str:
        body = ", ".join(f"{o!r}: {w:.6g}" for o, w in self.items())
        return f"Distribution({{{body}}})"
