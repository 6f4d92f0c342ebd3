"""Synthetic dataset generator for desk-scale end-to-end validation.

Each clip contains a fixed set of tracks (one object per track per frame)
walking at a per-track speed and heading. Flow crops realize the track
velocity as a constant field plus optional pixel noise, keypoints follow
a canonical walking skeleton scaled into the box, and embeddings sit in a
single Gaussian cluster. Test clips inject anomalies over contiguous
frame runs: a designated track gets its velocity multiplied, its heading
flipped, its skeleton distorted, and/or its embedding shifted, and the
affected frames are labeled 1.

Velocity components are quantized to 1/1024 pixel so that small integer
and half-integer speed multipliers stay exact in float32 crops.

Everything is a deterministic function of the config seed: regenerating
with the same config yields byte-identical directories.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import GENERATOR_STAMP
from .dataset import BoundingBox, ClipManifest, DatasetManifest, ObjectRecord, TensorRef, write_split
from .errors import ValidationError
from .seeding import derive_seed

ANOMALY_TYPES = ("speed", "direction", "pose", "embedding")

# Canonical standing skeleton in unit-box coordinates (x right, y down),
# ordered head to ankles.
_SKELETON_17 = np.array([
    (0.50, 0.08), (0.46, 0.05), (0.54, 0.05), (0.42, 0.07), (0.58, 0.07),
    (0.38, 0.22), (0.62, 0.22), (0.32, 0.38), (0.68, 0.38), (0.30, 0.52),
    (0.70, 0.52), (0.42, 0.52), (0.58, 0.52), (0.40, 0.74), (0.60, 0.74),
    (0.40, 0.95), (0.60, 0.95),
], dtype=np.float64)


def skeleton_template(num_keypoints: int) -> np.ndarray:
    """(d, 2) unit-box landmark layout; extra points are spread down the spine."""
    if num_keypoints < 1:
        raise ValidationError("keypoint_count must be >= 1")
    if num_keypoints <= _SKELETON_17.shape[0]:
        return _SKELETON_17[:num_keypoints].copy()
    extra = num_keypoints - _SKELETON_17.shape[0]
    spine_y = np.linspace(0.15, 0.9, extra)
    spine = np.column_stack([np.full(extra, 0.5), spine_y])
    return np.vstack([_SKELETON_17, spine])


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 7
    train_clips: int = 5
    test_clips: int = 5
    frames_per_clip: int = 200
    objects_per_frame: int = 3
    keypoint_count: int = 17
    embedding_dim: int = 16
    frame_height: int = 240
    frame_width: int = 360
    speed_mean: float = 2.0
    speed_std: float = 0.3
    headings: tuple[float, ...] = (0.4, math.pi + 0.4)  # mid-bin for B=8
    heading_jitter: float = 0.08
    flow_noise: float = 0.05
    crop_size_min: int = 10
    crop_size_max: int = 24
    box_height_min: float = 40.0
    box_height_max: float = 80.0
    box_aspect_min: float = 0.35
    box_aspect_max: float = 0.55
    pose_noise: float = 0.01
    embedding_scale: float = 0.1
    anomaly_fraction: float = 0.2
    anomaly_run_length: int = 20
    anomaly_types: tuple[str, ...] = ("speed", "pose")
    speed_multiplier: float = 5.0
    pose_distortion: float = 0.4
    embedding_shift: float = 4.0

    def validate(self) -> None:
        if self.train_clips < 1 or self.test_clips < 1:
            raise ValidationError("need at least one clip per split")
        if self.frames_per_clip < 1 or self.objects_per_frame < 1:
            raise ValidationError("frames_per_clip and objects_per_frame must be >= 1")
        if not 0.0 <= self.anomaly_fraction <= 1.0:
            raise ValidationError("anomaly_fraction must lie in [0, 1]")
        if self.speed_multiplier <= 0:
            raise ValidationError("speed_multiplier must be positive")
        if self.anomaly_run_length < 1:
            raise ValidationError("anomaly_run_length must be >= 1")
        for t in self.anomaly_types:
            if t not in ANOMALY_TYPES:
                raise ValidationError(f"unknown anomaly type {t!r}, expected subset of {ANOMALY_TYPES}")
        if self.crop_size_min < 2 or self.crop_size_max < self.crop_size_min:
            raise ValidationError("crop size range must satisfy 2 <= min <= max")
        if not (self.box_height_min > 0 and self.box_height_max >= self.box_height_min):
            raise ValidationError("box height range must be positive and ordered")
        if self.flow_noise < 0 or self.pose_noise < 0 or self.embedding_scale < 0:
            raise ValidationError("noise scales must be non-negative")


def config_from_json_dict(raw: dict) -> SynthConfig:
    cfg = SynthConfig()
    known = set(cfg.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ValidationError(f"unknown synthetic config keys: {sorted(unknown)}")
    coerced = dict(raw)
    if "anomaly_types" in coerced:
        coerced["anomaly_types"] = tuple(coerced["anomaly_types"])
    if "headings" in coerced:
        coerced["headings"] = tuple(float(v) for v in coerced["headings"])
    cfg = replace(cfg, **coerced)
    cfg.validate()
    return cfg


def _quantize(value: float) -> float:
    """Snap to 1/1024 pixel so small multipliers stay exact in float32."""
    return round(value * 1024.0) / 1024.0


@dataclass
class _Track:
    velocity: tuple[float, float]     # quantized pixels/frame
    speed: float                      # sampled L2 speed before quantization
    box_width: float
    box_height: float
    crop_shape: tuple[int, int]
    start: tuple[float, float]


def _make_tracks(cfg: SynthConfig, rng: np.random.Generator) -> list[_Track]:
    tracks = []
    for slot in range(cfg.objects_per_frame):
        heading = cfg.headings[slot % len(cfg.headings)] + cfg.heading_jitter * rng.standard_normal()
        speed = cfg.speed_mean + cfg.speed_std * rng.standard_normal()
        velocity = (_quantize(speed * math.cos(heading)), _quantize(speed * math.sin(heading)))
        box_height = rng.uniform(cfg.box_height_min, cfg.box_height_max)
        box_width = box_height * rng.uniform(cfg.box_aspect_min, cfg.box_aspect_max)
        crop_shape = (int(rng.integers(cfg.crop_size_min, cfg.crop_size_max + 1)),
                      int(rng.integers(cfg.crop_size_min, cfg.crop_size_max + 1)))
        start = (rng.uniform(0.0, max(cfg.frame_width - box_width, 1.0)),
                 rng.uniform(0.0, max(cfg.frame_height - box_height, 1.0)))
        tracks.append(_Track(velocity=velocity, speed=speed, box_width=box_width,
                             box_height=box_height, crop_shape=crop_shape, start=start))
    return tracks


def _anomaly_plan(cfg: SynthConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame labels plus the anomalous track slot per frame (-1 = none).

    Anomalous frames come in contiguous runs so that temporal smoothing has
    something to exploit; runs are placed one per equal section of the clip.
    """
    labels = np.zeros(cfg.frames_per_clip, dtype=np.int8)
    anomalous_slot = np.full(cfg.frames_per_clip, -1, dtype=np.int64)
    target = int(round(cfg.anomaly_fraction * cfg.frames_per_clip))
    if target == 0:
        return labels, anomalous_slot
    run_count = max(1, math.ceil(target / cfg.anomaly_run_length))
    section = cfg.frames_per_clip // run_count
    remaining = target
    for i in range(run_count):
        length = min(cfg.anomaly_run_length, remaining)
        if length == 0:
            break
        lo = i * section
        hi = min((i + 1) * section, cfg.frames_per_clip) - length
        start = int(rng.integers(lo, max(hi, lo) + 1))
        slot = int(rng.integers(cfg.objects_per_frame))
        labels[start:start + length] = 1
        anomalous_slot[start:start + length] = slot
        remaining -= length
    return labels, anomalous_slot


def _generate_clip(cfg: SynthConfig, clip_id: str, split: str, embed_center: np.ndarray,
                   template: np.ndarray):
    rng = np.random.default_rng(derive_seed(cfg.seed, f"{split}:{clip_id}"))
    tracks = _make_tracks(cfg, rng)
    if split == "test":
        labels, anomalous_slot = _anomaly_plan(cfg, rng)
    else:
        labels = np.zeros(cfg.frames_per_clip, dtype=np.int8)
        anomalous_slot = np.full(cfg.frames_per_clip, -1, dtype=np.int64)

    records: list[ObjectRecord] = []
    crops: dict[str, np.ndarray] = {}
    for frame in range(cfg.frames_per_clip):
        for slot, track in enumerate(tracks):
            anomalous = slot == anomalous_slot[frame]
            vx, vy = track.velocity
            if anomalous and "speed" in cfg.anomaly_types:
                vx, vy = cfg.speed_multiplier * vx, cfg.speed_multiplier * vy
            if anomalous and "direction" in cfg.anomaly_types:
                vx, vy = -vx, -vy

            x0 = (track.start[0] + frame * track.velocity[0]) % max(cfg.frame_width - track.box_width, 1.0)
            y0 = (track.start[1] + frame * track.velocity[1]) % max(cfg.frame_height - track.box_height, 1.0)
            bbox = BoundingBox(x_min=x0, y_min=y0, x_max=x0 + track.box_width, y_max=y0 + track.box_height)

            h, w = track.crop_shape
            crop = np.empty((h, w, 2), dtype=np.float64)
            crop[..., 0] = vx
            crop[..., 1] = vy
            if cfg.flow_noise > 0:
                crop += cfg.flow_noise * rng.standard_normal((h, w, 2))
            crop_rel = f"{clip_id}/tensors/f{frame:04d}_o{slot}.vadt"
            crops[crop_rel] = crop.astype(np.float32)

            scale = np.array([track.box_width, track.box_height])
            keypoints = np.array([x0, y0]) + template * scale
            if cfg.pose_noise > 0:
                keypoints = keypoints + cfg.pose_noise * rng.standard_normal(template.shape) * scale
            if anomalous and "pose" in cfg.anomaly_types:
                keypoints = keypoints + cfg.pose_distortion * rng.standard_normal(template.shape) * scale

            embedding = embed_center + cfg.embedding_scale * rng.standard_normal(cfg.embedding_dim)
            if anomalous and "embedding" in cfg.anomaly_types:
                direction = rng.standard_normal(cfg.embedding_dim)
                embedding = embedding + cfg.embedding_shift * direction / np.linalg.norm(direction)

            records.append(ObjectRecord(
                clip_id=clip_id, frame_index=frame, bbox=bbox, class_label=0,
                confidence=float(rng.uniform(0.5, 1.0)),
                flow_crop=TensorRef(path=crop_rel, dtype="float32", shape=(h, w, 2)),
                keypoints=keypoints, embedding=embedding))
    return records, crops, labels


def generate(cfg: SynthConfig, out_root: str | Path) -> Path:
    """Write train and test splits plus ground truth under `out_root`."""
    cfg.validate()
    out_root = Path(out_root)
    embed_center = np.random.default_rng(derive_seed(cfg.seed, "embedding-center")) \
        .standard_normal(cfg.embedding_dim)
    template = skeleton_template(cfg.keypoint_count)

    for split, clip_count in (("train", cfg.train_clips), ("test", cfg.test_clips)):
        clip_ids = [f"{split}_{i:03d}" for i in range(clip_count)]
        manifest = DatasetManifest(
            split=split,
            clips=tuple(ClipManifest(clip_id=c, num_frames=cfg.frames_per_clip,
                                     objects_file=f"{c}/objects.jsonl") for c in clip_ids),
            keypoint_count=cfg.keypoint_count,
            embedding_dim=cfg.embedding_dim,
        )
        objects_by_clip = {}
        crops: dict[str, np.ndarray] = {}
        labels_by_clip = {}
        for clip_id in clip_ids:
            records, clip_crops, labels = _generate_clip(cfg, clip_id, split, embed_center, template)
            objects_by_clip[clip_id] = records
            crops.update(clip_crops)
            if split == "test":
                labels_by_clip[clip_id] = labels.tolist()
        write_split(out_root, manifest, objects_by_clip, flow_crops=crops,
                    labels=labels_by_clip if split == "test" else None)

    info = {"generator": GENERATOR_STAMP, "synthetic_config": config_to_json_dict(cfg)}
    with open(out_root / "synthetic_config.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(info, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out_root


def config_to_json_dict(cfg: SynthConfig) -> dict:
    out = {}
    for name in cfg.__dataclass_fields__:
        value = getattr(cfg, name)
        out[name] = list(value) if isinstance(value, tuple) else value
    return out
