"""Shared helpers for building small handcrafted datasets."""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np
import pytest

from ovad.dataset import (BoundingBox, ClipManifest, DatasetManifest, ObjectRecord,
                          TensorRef, write_split)


def make_record(clip_id: str, frame_index: int, *, bbox=(10.0, 20.0, 30.0, 60.0),
                class_label: int = 0, confidence: float = 0.9, flow_path: str | None = None,
                flow_shape: tuple[int, int, int] = (4, 5, 2), keypoints=None,
                embedding=None) -> ObjectRecord:
    flow = None
    if flow_path is not None:
        flow = TensorRef(path=flow_path, dtype="float32", shape=flow_shape)
    return ObjectRecord(clip_id=clip_id, frame_index=frame_index, bbox=BoundingBox(*bbox),
                        class_label=class_label, confidence=confidence, flow_crop=flow,
                        keypoints=keypoints, embedding=embedding)


def write_tiny_dataset(root: Path, split: str = "train", *, keypoint_count: int = 17,
                       embedding_dim: int | None = None, clips=None, objects=None,
                       flow_crops=None, labels=None) -> Path:
    """Write a minimal split; defaults to two 3-frame clips with flow-only objects."""
    if clips is None:
        clips = [("clip_a", 3), ("clip_b", 3)]
    manifest = DatasetManifest(
        split=split,
        clips=tuple(ClipManifest(clip_id=c, num_frames=n, objects_file=f"{c}/objects.jsonl")
                    for c, n in clips),
        keypoint_count=keypoint_count,
        embedding_dim=embedding_dim,
    )
    if objects is None:
        rng = np.random.default_rng(0)
        objects = {}
        flow_crops = {}
        for clip_id, n_frames in clips:
            records = []
            for frame in range(n_frames):
                rel = f"{clip_id}/tensors/f{frame}.vadt"
                records.append(make_record(clip_id, frame, flow_path=rel))
                flow_crops[rel] = rng.normal(size=(4, 5, 2)).astype(np.float32)
            objects[clip_id] = records
    write_split(root, manifest, objects, flow_crops=flow_crops or {}, labels=labels)
    return root


def dir_digest(path: Path) -> dict[str, str]:
    """Relative path -> sha256 of every file under `path`."""
    out = {}
    for file in sorted(p for p in Path(path).rglob("*") if p.is_file()):
        out[str(file.relative_to(path))] = hashlib.sha256(file.read_bytes()).hexdigest()
    return out


@pytest.fixture
def tiny_train(tmp_path) -> Path:
    return write_tiny_dataset(tmp_path / "ds")
