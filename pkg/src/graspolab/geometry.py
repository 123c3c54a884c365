"""Shared coordinate primitives: pixel boxes, image points, EE positions."""

from __future__ import annotations

import math
from dataclasses import dataclass


def _require_finite(name, *values):
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"{name}: non-finite coordinate {v!r}")


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned pixel box; (x1, y1) top-left corner, far corner exclusive."""

    x1: int
    y1: int
    x2: int
    y2: int

    def __post_init__(self):
        for v in (self.x1, self.y1, self.x2, self.y2):
            if not isinstance(v, int):
                raise ValueError(f"box corners must be integers, got {v!r}")
        if self.x2 <= self.x1 or self.y2 <= self.y1:
            raise ValueError(
                f"degenerate box ({self.x1},{self.y1})..({self.x2},{self.y2}): "
                "needs x2 > x1 and y2 > y1"
            )

    @property
    def width(self) -> int:
        return self.x2 - self.x1

    @property
    def height(self) -> int:
        return self.y2 - self.y1


@dataclass(frozen=True)
class ImagePoint:
    """Point in image coordinates; iz carries the third input channel (1 unless a depth value is used)."""

    ix: float
    iy: float
    iz: float = 1.0

    def __post_init__(self):
        _require_finite("ImagePoint", self.ix, self.iy, self.iz)


@dataclass(frozen=True)
class EEPosition:
    """End-effector position in robot base frame, meters."""

    rx: float
    ry: float
    rz: float

    def __post_init__(self):
        _require_finite("EEPosition", self.rx, self.ry, self.rz)


@dataclass(frozen=True)
class WorkspaceConfig:
    """Physical table extent and camera image size."""

    table_width_cm: float = 63.0
    table_height_cm: float = 86.0
    image_width_px: int = 1920
    image_height_px: int = 1080

    def __post_init__(self):
        for name in ("table_width_cm", "table_height_cm", "image_width_px", "image_height_px"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def bbox_center(box: BoundingBox, iz: float = 1.0) -> ImagePoint:
    """Center of a detection box: (x1 + w/2, y1 + h/2)."""
    return ImagePoint(box.x1 + box.width / 2.0, box.y1 + box.height / 2.0, iz)


def angular_distance(a: float, b: float) -> float:
    """Smallest rotation between two undirected axes, degrees in [0, 90].

    Angles are taken mod 180 because a gripper rotated by 180 degrees
    closes along the same line.
    """
    _require_finite("angular_distance", a, b)
    d = (a - b) % 180.0
    return min(d, 180.0 - d)
