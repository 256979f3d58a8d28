"""Shared domain types and image-plane geometry.

Boxes are center+size in image coordinates (x right, y down, units px).
Corner form only appears at serialization boundaries via the helpers here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

FEATURE_DIM = 16
FEATURE_NORM_TOL = 1e-6


class HandKind(str, Enum):
    MY_LEFT = "my_left"
    MY_RIGHT = "my_right"
    OTHER_LEFT = "other_left"
    OTHER_RIGHT = "other_right"


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera: horizontal FOV plus pixel grid size.

    deg_per_px is the linear small-angle conversion used for analysis
    metrics; actual projection uses the tan model (see scene.project).
    """

    hfov_deg: float = 88.0
    width_px: int = 640
    height_px: int = 480

    def __post_init__(self):
        if not 0.0 < self.hfov_deg < 180.0:
            raise ValueError(f"hfov_deg must be in (0, 180), got {self.hfov_deg}")
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValueError("image dimensions must be positive")

    @property
    def deg_per_px(self) -> float:
        return self.hfov_deg / self.width_px

    @property
    def focal_px(self) -> float:
        """Focal length in pixels for the tan projection model."""
        return (self.width_px / 2.0) / math.tan(math.radians(self.hfov_deg) / 2.0)


def px_to_deg(px: float, cam: CameraModel) -> float:
    """Convert a pixel span to degrees of visual angle (linear model)."""
    return px * cam.deg_per_px


def deg_to_px(deg: float, cam: CameraModel) -> float:
    return deg / cam.deg_per_px


@dataclass(frozen=True)
class PixelBox:
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box size must be positive, got w={self.w} h={self.h}")

    @property
    def x1(self) -> float:
        return self.cx - self.w / 2.0

    @property
    def y1(self) -> float:
        return self.cy - self.h / 2.0

    @property
    def x2(self) -> float:
        return self.cx + self.w / 2.0

    @property
    def y2(self) -> float:
        return self.cy + self.h / 2.0

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def bottom_row(self) -> float:
        return self.y2

    def corners(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)

    @staticmethod
    def from_corners(x1: float, y1: float, x2: float, y2: float) -> "PixelBox":
        return PixelBox((x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1)


@dataclass(frozen=True)
class Category:
    label: str
    hand_kind: HandKind | None = None

    def __post_init__(self):
        if (self.label == "hand") != (self.hand_kind is not None):
            raise ValueError("hand_kind must be present iff label == 'hand'")

    @property
    def key(self) -> tuple[str, str | None]:
        return (self.label, self.hand_kind.value if self.hand_kind else None)


MY_RIGHT_HAND = Category("hand", HandKind.MY_RIGHT)
MY_LEFT_HAND = Category("hand", HandKind.MY_LEFT)


@dataclass(frozen=True)
class Detection:
    category: Category
    box: PixelBox
    confidence: float
    frame_index: int
    feature: np.ndarray | None = None

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0,1], got {self.confidence}")
        if self.feature is not None:
            norm = float(np.linalg.norm(self.feature))
            if abs(norm - 1.0) > FEATURE_NORM_TOL:
                raise ValueError(f"feature must be unit length, norm={norm}")


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel depth. Metric mode stores meters; relative stores disparity."""

    width_px: int
    height_px: int
    mode: str  # "metric" | "relative"
    values: np.ndarray = field(repr=False)
    frame_index: int = 0

    def __post_init__(self):
        if self.mode not in ("metric", "relative"):
            raise ValueError(f"unknown depth mode {self.mode!r}")
        if self.values.shape != (self.height_px, self.width_px):
            raise ValueError(
                f"depth grid {self.values.shape} does not match "
                f"{self.height_px}x{self.width_px}"
            )
        if self.mode == "metric" and not np.all(self.values > 0):
            raise ValueError("metric depth values must be positive")

    def at(self, px: float, py: float) -> float:
        """Depth sample at an image coordinate, clamped to the grid."""
        col = min(max(int(px), 0), self.width_px - 1)
        row = min(max(int(py), 0), self.height_px - 1)
        return float(self.values[row, col])


def iou(a: PixelBox, b: PixelBox) -> float:
    """Intersection over union of two boxes, in [0, 1]."""
    ix = max(0.0, min(a.x2, b.x2) - max(a.x1, b.x1))
    iy = max(0.0, min(a.y2, b.y2) - max(a.y1, b.y1))
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0


def overlap_fraction(hand: PixelBox, target: PixelBox) -> float:
    """Fraction of the target box covered by the hand box, in [0, 1]."""
    ix = max(0.0, min(hand.x2, target.x2) - max(hand.x1, target.x1))
    iy = max(0.0, min(hand.y2, target.y2) - max(hand.y1, target.y1))
    return (ix * iy) / target.area


def iou_matrix(boxes_a: list[PixelBox], boxes_b: list[PixelBox]) -> np.ndarray:
    """Pairwise IoU, shape (len(a), len(b)). Vectorized over corner arrays."""
    if not boxes_a or not boxes_b:
        return np.zeros((len(boxes_a), len(boxes_b)))
    a = np.array([b.corners() for b in boxes_a])
    b = np.array([b.corners() for b in boxes_b])
    ix = np.maximum(
        0.0,
        np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0]),
    )
    iy = np.maximum(
        0.0,
        np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1]),
    )
    inter = ix * iy
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    return np.where(union > 0, inter / union, 0.0)
