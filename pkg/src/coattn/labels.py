"""Binary image-level label vectors and their extended set algebra.

A label vector has one {0,1} entry per class. Intersection is bitwise-and;
difference is extended to vectors as a \\ b = a - (a AND b), so subtracting
never produces negative entries.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np

from .errors import DimensionError


class LabelVector:
    """Immutable {0,1}^K vector of image-level class presence."""

    __slots__ = ("bits",)

    def __init__(self, bits: Iterable[int]):
        arr = np.asarray(list(bits) if not isinstance(bits, np.ndarray) else bits,
                         dtype=np.uint8)
        if arr.ndim != 1:
            raise DimensionError(f"LabelVector: 1-D input required, got shape "
                                 f"{arr.shape}")
        if not np.isin(arr, (0, 1)).all():
            raise ValueError("LabelVector entries must be 0 or 1")
        arr.setflags(write=False)
        self.bits = arr

    @classmethod
    def from_indices(cls, indices: Iterable[int], num_classes: int) -> "LabelVector":
        """Build from 1-based class indices, the manifest convention."""
        bits = np.zeros(num_classes, dtype=np.uint8)
        for idx in indices:
            if not 1 <= idx <= num_classes:
                raise ValueError(f"class index {idx} outside 1..{num_classes}")
            bits[idx - 1] = 1
        return cls(bits)

    def to_indices(self) -> list[int]:
        """Sorted 1-based class indices of the set bits."""
        return [int(i) + 1 for i in np.flatnonzero(self.bits)]

    @property
    def num_classes(self) -> int:
        return int(self.bits.shape[0])

    def _check(self, other: "LabelVector") -> None:
        if self.num_classes != other.num_classes:
            raise DimensionError(f"label length mismatch: {self.num_classes} "
                                 f"vs {other.num_classes}")

    def intersect(self, other: "LabelVector") -> "LabelVector":
        self._check(other)
        return LabelVector(self.bits & other.bits)

    def subtract(self, other: "LabelVector") -> "LabelVector":
        self._check(other)
        return LabelVector(self.bits - (self.bits & other.bits))

    def union(self, other: "LabelVector") -> "LabelVector":
        self._check(other)
        return LabelVector(self.bits | other.bits)

    def has_common(self, other: "LabelVector") -> bool:
        self._check(other)
        return bool((self.bits & other.bits).any())

    def any(self) -> bool:
        return bool(self.bits.any())

    def as_float(self) -> np.ndarray:
        return self.bits.astype(np.float64)

    def __eq__(self, other) -> bool:
        return (isinstance(other, LabelVector)
                and self.num_classes == other.num_classes
                and bool((self.bits == other.bits).all()))

    def __hash__(self) -> int:
        return hash(self.bits.tobytes())

    def __repr__(self) -> str:
        return f"LabelVector({self.bits.tolist()})"


def intersect(a: LabelVector, b: LabelVector) -> LabelVector:
    return a.intersect(b)


def subtract(a: LabelVector, b: LabelVector) -> LabelVector:
    return a.subtract(b)


def has_common(a: LabelVector, b: LabelVector) -> bool:
    return a.has_common(b)
