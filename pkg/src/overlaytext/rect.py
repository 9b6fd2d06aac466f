"""Axis-aligned pixel rectangles shared by detection, tracking and evaluation."""

from __future__ import annotations

from typing import NamedTuple


class Rect(NamedTuple):
    x: int
    y: int
    w: int
    h: int

    @property
    def area(self) -> int:
        return max(self.w, 0) * max(self.h, 0)

    @property
    def x2(self) -> int:
        return self.x + self.w

    @property
    def y2(self) -> int:
        return self.y + self.h

    def intersection(self, other: Rect) -> Rect:
        x1 = max(self.x, other.x)
        y1 = max(self.y, other.y)
        x2 = min(self.x2, other.x2)
        y2 = min(self.y2, other.y2)
        if x2 <= x1 or y2 <= y1:
            return Rect(x1, y1, 0, 0)
        return Rect(x1, y1, x2 - x1, y2 - y1)

    def union(self, other: Rect) -> Rect:
        """Smallest rectangle covering both."""
        x1 = min(self.x, other.x)
        y1 = min(self.y, other.y)
        return Rect(x1, y1, max(self.x2, other.x2) - x1, max(self.y2, other.y2) - y1)

    def inside(self, width: int, height: int) -> bool:
        return (
            self.w > 0
            and self.h > 0
            and self.x >= 0
            and self.y >= 0
            and self.x2 <= width
            and self.y2 <= height
        )

    def to_dict(self) -> dict:
        return {"x": int(self.x), "y": int(self.y), "w": int(self.w), "h": int(self.h)}

    @classmethod
    def from_dict(cls, d: dict) -> Rect:
        return cls(int(d["x"]), int(d["y"]), int(d["w"]), int(d["h"]))


def intersection_area(a: Rect, b: Rect) -> int:
    return a.intersection(b).area


def iou(a: Rect, b: Rect) -> float:
    inter = intersection_area(a, b)
    if inter == 0:
        return 0.0
    return inter / (a.area + b.area - inter)


def bounding(rects) -> Rect:
    rects = list(rects)
    out = rects[0]
    for r in rects[1:]:
        out = out.union(r)
    return out
