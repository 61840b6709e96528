"""Axis-aligned box arithmetic in corner (x1, y1, x2, y2) form.

Zero-area boxes are legal; any 0/0 ratio evaluates to 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple


@dataclass(frozen=True)
class BoundingBox:
    x1: float
    y1: float
    x2: float
    y2: float
    score: float = 1.0
    category_id: int = -1

    def __post_init__(self):
        if not (self.x1 <= self.x2 and self.y1 <= self.y2):
            raise ValueError(f"inverted box corners: {self.as_list()}")
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"box score {self.score} outside [0, 1]")

    @classmethod
    def from_seq(cls, coords: Sequence[float], score: float = 1.0, category_id: int = -1) -> "BoundingBox":
        x1, y1, x2, y2 = (float(c) for c in coords)
        return cls(x1, y1, x2, y2, score, category_id)

    def as_list(self) -> list:
        return [self.x1, self.y1, self.x2, self.y2]

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    def same_coords(self, other: "BoundingBox") -> bool:
        return self.as_list() == other.as_list()


def area(b: BoundingBox) -> float:
    return b.area


def intersection(a: BoundingBox, b: BoundingBox) -> float:
    w = min(a.x2, b.x2) - max(a.x1, b.x1)
    h = min(a.y2, b.y2) - max(a.y1, b.y1)
    if w <= 0.0 or h <= 0.0:
        return 0.0
    return w * h


def enclosing_box(a: BoundingBox, b: BoundingBox) -> BoundingBox:
    return BoundingBox(min(a.x1, b.x1), min(a.y1, b.y1), max(a.x2, b.x2), max(a.y2, b.y2))


def giou_terms(a: BoundingBox, b: BoundingBox) -> Tuple[float, float, float]:
    """Return ``(A_inter, A_union, A_min)`` where ``A_min`` is the area of the
    smallest axis-aligned box enclosing both inputs."""
    inter = intersection(a, b)
    union = a.area + b.area - inter
    enclosing = enclosing_box(a, b).area
    return inter, union, enclosing


def iou(a: BoundingBox, b: BoundingBox) -> float:
    inter, union, _ = giou_terms(a, b)
    if union <= 0.0:
        return 0.0
    return inter / union
