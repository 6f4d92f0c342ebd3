"""Pose features: keypoints normalized to a fixed-size reference box.

Each landmark is shifted by the bounding box top-left corner and scaled
per axis so the box maps onto a target (height, width) computed from
training-set human boxes. The result is invariant to where the person
stands and how large they appear, but keeps unusual limb geometry intact:
landmarks outside the box are deliberately not clamped.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import BoundingBox


@dataclass(frozen=True)
class PoseTargetSize:
    height: float
    width: float


def compute_pose_target_size(train_boxes: Sequence[BoundingBox]) -> PoseTargetSize:
    """Mean height and width over training boxes (callers pass human boxes only)."""
    if len(train_boxes) == 0:
        raise ValueError("cannot compute pose target size from an empty box list")
    heights = np.asarray([b.height for b in train_boxes], dtype=np.float64)
    widths = np.asarray([b.width for b in train_boxes], dtype=np.float64)
    return PoseTargetSize(height=float(heights.mean()), width=float(widths.mean()))


def normalize_keypoints(keypoints: np.ndarray, bbox: BoundingBox, target: PoseTargetSize) -> np.ndarray:
    """Map (d, 2) frame-coordinate landmarks into target-box units.

    x scales by target.width / bbox.width, y by target.height / bbox.height,
    after subtracting the box top-left corner. Returns the flattened
    (x1, y1, x2, y2, ...) vector of length 2*d.
    """
    pts = np.asarray(keypoints, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"keypoints must have shape (d, 2), got {pts.shape}")
    if not (bbox.width > 0 and bbox.height > 0):
        raise ValueError(f"degenerate bounding box: width={bbox.width}, height={bbox.height}")
    if not (target.height > 0 and target.width > 0):
        raise ValueError(f"pose target size must be positive, got {target}")

    scaled = np.empty_like(pts)
    scaled[:, 0] = (pts[:, 0] - bbox.x_min) * (target.width / bbox.width)
    scaled[:, 1] = (pts[:, 1] - bbox.y_min) * (target.height / bbox.height)
    return scaled.reshape(-1)
