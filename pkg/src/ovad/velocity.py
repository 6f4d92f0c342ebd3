"""Velocity features: per-object orientation histograms of optical flow.

A flow crop (h x w x 2 vectors) is rescaled to a fixed size, every vector
is assigned to one of B equi-spaced orientation bins by its angle
atan2(y, x), and each bin reports the mean L1 magnitude |x| + |y| of its
vectors. Zero vectors have no orientation and are skipped; empty bins
report 0 so downstream density models always see finite features.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

_TWO_PI = 2.0 * math.pi


@lru_cache(maxsize=256)
def _bilinear_grid(src_h: int, src_w: int, dst_h: int, dst_w: int):
    """Corner-aligned sample positions split into integer index + fraction."""
    ys = np.linspace(0.0, src_h - 1.0, dst_h) if src_h > 1 else np.zeros(dst_h)
    xs = np.linspace(0.0, src_w - 1.0, dst_w) if src_w > 1 else np.zeros(dst_w)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, src_h - 1)
    x1 = np.minimum(x0 + 1, src_w - 1)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]
    for arr in (y0, y1, x0, x1, wy, wx):
        arr.setflags(write=False)
    return y0, y1, wy, x0, x1, wx


def resize_flow_crop(crop: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    """Bilinearly resample a flow crop to (H, W) with corner-aligned positions.

    Channels are interpolated independently; flow values are interpolated,
    never rescaled by the geometric resize factor. Interpolation uses the
    lerp form a + w*(b - a), so constant fields and same-size inputs pass
    through bit-exactly.
    """
    crop = np.asarray(crop, dtype=np.float64)
    if crop.ndim != 3 or crop.shape[2] != 2 or crop.shape[0] < 1 or crop.shape[1] < 1:
        raise ValueError(f"flow crop must have shape (h, w, 2) with h, w >= 1, got {crop.shape}")
    if not np.isfinite(crop).all():
        raise ValueError("flow crop contains non-finite values")
    dst_h, dst_w = int(target[0]), int(target[1])
    if dst_h < 1 or dst_w < 1:
        raise ValueError(f"resize target must be positive, got {target}")

    y0, y1, wy, x0, x1, wx = _bilinear_grid(crop.shape[0], crop.shape[1], dst_h, dst_w)
    rows0 = crop[y0]
    rows = rows0 + wy * (crop[y1] - rows0)
    cols0 = rows[:, x0, :]
    return cols0 + wx * (rows[:, x1, :] - cols0)


def flow_orientation_bin(x: float, y: float, bins: int) -> int:
    """Index of the half-open orientation interval [2*pi*b/B, 2*pi*(b+1)/B) holding atan2(y, x)."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    if x == 0.0 and y == 0.0:
        raise ValueError("zero flow vector has no orientation; callers must skip it")
    theta = math.atan2(y, x)
    if theta < 0.0:
        theta += _TWO_PI
    return int(theta * bins / _TWO_PI) % bins


def velocity_histogram(crop: np.ndarray, bins: int, height: float | None = None) -> np.ndarray:
    """Mean L1 flow magnitude per orientation bin.

    Vectors with |x| + |y| == 0 are excluded entirely. When `height` is
    given, each magnitude is divided by it before averaging (per-dataset
    normalization for high-resolution footage). Empty bins yield 0.
    """
    crop = np.asarray(crop, dtype=np.float64)
    if crop.ndim != 3 or crop.shape[2] != 2:
        raise ValueError(f"flow crop must have shape (h, w, 2), got {crop.shape}")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    if height is not None and not height > 0:
        raise ValueError(f"height must be positive, got {height}")

    x = crop[..., 0].ravel()
    y = crop[..., 1].ravel()
    magnitude = np.abs(x) + np.abs(y)
    moving = magnitude > 0.0
    if not moving.any():
        return np.zeros(bins, dtype=np.float64)

    x = x[moving]
    y = y[moving]
    magnitude = magnitude[moving]
    if height is not None:
        magnitude = magnitude / height

    theta = np.arctan2(y, x)
    np.add(theta, _TWO_PI, out=theta, where=theta < 0.0)
    indices = np.floor(theta * bins / _TWO_PI).astype(np.int64) % bins

    sums = np.bincount(indices, weights=magnitude, minlength=bins)
    counts = np.bincount(indices, minlength=bins)
    out = np.zeros(bins, dtype=np.float64)
    occupied = counts > 0
    out[occupied] = sums[occupied] / counts[occupied]
    return out
