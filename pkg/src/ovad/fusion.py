"""Score calibration, per-frame fusion, and temporal smoothing.

Raw per-feature scores live on incomparable scales, so each feature is
min-max normalized by the extremes its scorer produced on the normal
training set. A frame's fused score is the sum over enabled features of
the calibrated maximum across that frame's objects; no clamping is
applied, so extreme test scores keep their ranking information. Per-clip
score traces are finally smoothed with a truncated Gaussian kernel, since
real anomalous events span many consecutive frames.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class FeatureCalibration:
    """Training-set score extremes for one feature."""

    min_score: float
    max_score: float

    @property
    def degenerate(self) -> bool:
        return self.max_score == self.min_score

    def apply(self, raw: np.ndarray) -> np.ndarray:
        if self.degenerate:
            return np.zeros_like(np.asarray(raw, dtype=np.float64))
        return (np.asarray(raw, dtype=np.float64) - self.min_score) / (self.max_score - self.min_score)


@dataclass(frozen=True)
class CalibrationParams:
    per_feature: dict[str, FeatureCalibration]

    def __getitem__(self, feature: str) -> FeatureCalibration:
        return self.per_feature[feature]


@dataclass(frozen=True)
class FrameScore:
    clip_id: str
    frame_index: int
    terms: dict[str, float]
    total: float


def calibrate(train_scores: Mapping[str, Sequence[float]]) -> CalibrationParams:
    """Record per-feature (min, max) raw-score bounds from the training set.

    Callers must score kNN-based features with their own clip excluded
    (otherwise near-duplicate frames collapse every distance to ~0) and
    velocity features with the plain mixture scorer.
    """
    per_feature = {}
    for feature, scores in train_scores.items():
        arr = np.asarray(scores, dtype=np.float64)
        if arr.size == 0:
            raise ValidationError(f"feature {feature!r} is enabled but has no training scores")
        if not np.isfinite(arr).all():
            raise ValidationError(f"feature {feature!r} has non-finite training scores")
        per_feature[feature] = FeatureCalibration(min_score=float(arr.min()), max_score=float(arr.max()))
    return CalibrationParams(per_feature=per_feature)


def frame_score(clip_id: str, frame_index: int, raw_scores: Mapping[str, Sequence[float]],
                params: CalibrationParams) -> FrameScore:
    """Fuse one frame: per feature, calibrated max over its objects; total is the sum.

    A feature missing from every object of the frame (or marked degenerate)
    contributes 0, so frames without detections score 0 overall.
    """
    terms: dict[str, float] = {}
    for feature, calib in params.per_feature.items():
        raw = np.asarray(raw_scores.get(feature, ()), dtype=np.float64)
        if raw.size == 0 or calib.degenerate:
            terms[feature] = 0.0
        else:
            terms[feature] = float(calib.apply(raw).max())
    return FrameScore(clip_id=clip_id, frame_index=frame_index, terms=terms,
                      total=float(sum(terms.values())))


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian truncated at radius ceil(3*sigma)."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    radius = int(math.ceil(3.0 * sigma))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (offsets / sigma) ** 2)
    return kernel / kernel.sum()


def smooth_scores(values: Sequence[float], sigma: float) -> np.ndarray:
    """Convolve a per-clip score trace with a Gaussian kernel, edges replicated."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("smoothing expects a non-empty 1-D score vector")
    kernel = gaussian_kernel(sigma)
    radius = (kernel.size - 1) // 2
    padded = np.pad(arr, radius, mode="edge")
    return np.convolve(padded, kernel, mode="valid")
