"""Dataset interchange format: manifests, per-object records, labels, scores.

On-disk layout (one directory per split):

    root/
      train/
        manifest.json
        <clip_id>/objects.jsonl
        <clip_id>/tensors/*.vadt
      test/
        manifest.json
        <clip_id>/objects.jsonl
        <clip_id>/tensors/*.vadt
        <clip_id>/labels.txt          # whitespace-separated 0/1, one per frame

`manifest.json` holds the split name, keypoint count, optional embedding
dimension, and the clip list; each clip names its `objects.jsonl` by a
path relative to the split directory. Every line of `objects.jsonl` is
one JSON object record. Flow crops are stored as float32 tensor files
(see tensorfile) referenced by split-relative paths. Train splits carry
no label files.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import GENERATOR_STAMP, tensorfile
from .errors import ValidationError

SPLITS = ("train", "test")
LABELS_FILENAME = "labels.txt"


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in image coordinates (origin top-left, y downward)."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    def validate(self, where: str) -> None:
        vals = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(v) for v in vals):
            raise ValidationError(f"{where}: bbox has non-finite coordinates {vals}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValidationError(f"{where}: bbox must satisfy x_min < x_max and y_min < y_max, got {vals}")


@dataclass(frozen=True)
class TensorRef:
    """Reference to a tensor file, path relative to the split directory."""

    path: str
    dtype: str
    shape: tuple[int, ...]


@dataclass
class ObjectRecord:
    """One detected object in one frame."""

    clip_id: str
    frame_index: int
    bbox: BoundingBox
    class_label: int
    confidence: float
    flow_crop: TensorRef | None = None
    keypoints: np.ndarray | None = None  # (d, 2) frame coordinates
    embedding: np.ndarray | None = None  # (D,)


@dataclass(frozen=True)
class ClipManifest:
    clip_id: str
    num_frames: int
    objects_file: str


@dataclass(frozen=True)
class DatasetManifest:
    split: str
    clips: tuple[ClipManifest, ...]
    keypoint_count: int
    embedding_dim: int | None


@dataclass
class LoadedSplit:
    """Manifest plus validated records, grouped by clip and frame-ordered."""

    manifest: DatasetManifest
    split_dir: Path
    objects_by_clip: dict[str, list[ObjectRecord]]

    def tensor_path(self, ref: TensorRef) -> Path:
        return self.split_dir / ref.path

    def load_flow_crop(self, record: ObjectRecord) -> np.ndarray:
        if record.flow_crop is None:
            raise ValidationError(f"object in clip {record.clip_id} frame {record.frame_index} has no flow crop")
        return tensorfile.read_tensor(self.tensor_path(record.flow_crop))


@dataclass(frozen=True)
class GroundTruth:
    """Per-clip 0/1 frame labels (1 = anomalous)."""

    labels: dict[str, np.ndarray]


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ValidationError(message)


def _parse_manifest(path: Path, split: str) -> DatasetManifest:
    if not path.is_file():
        raise ValidationError(f"missing manifest file {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"manifest {path} is not valid JSON: {exc}") from exc

    _require(raw.get("split") == split, f"manifest {path}: split is {raw.get('split')!r}, expected {split!r}")
    keypoint_count = raw.get("keypoint_count")
    _require(isinstance(keypoint_count, int) and keypoint_count >= 1,
             f"manifest {path}: keypoint_count must be a positive integer")
    embedding_dim = raw.get("embedding_dim")
    if embedding_dim is not None:
        _require(isinstance(embedding_dim, int) and embedding_dim >= 1,
                 f"manifest {path}: embedding_dim must be a positive integer or absent")

    clips = []
    seen = set()
    for entry in raw.get("clips", []):
        clip_id = entry.get("clip_id")
        _require(isinstance(clip_id, str) and clip_id, f"manifest {path}: clip entry without clip_id")
        _require(clip_id not in seen, f"manifest {path}: duplicate clip_id {clip_id!r}")
        seen.add(clip_id)
        num_frames = entry.get("num_frames")
        _require(isinstance(num_frames, int) and num_frames >= 1,
                 f"manifest {path}: clip {clip_id} needs num_frames >= 1")
        objects_file = entry.get("objects_file")
        _require(isinstance(objects_file, str) and objects_file,
                 f"manifest {path}: clip {clip_id} needs objects_file")
        clips.append(ClipManifest(clip_id=clip_id, num_frames=num_frames, objects_file=objects_file))
    return DatasetManifest(split=split, clips=tuple(clips), keypoint_count=keypoint_count,
                           embedding_dim=embedding_dim)


def _coerce_number(value, where: str, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{where}: {what} must be a number, got {value!r}")
    return float(value)


def _parse_record(raw: dict, clip: ClipManifest, manifest: DatasetManifest,
                  split_dir: Path, where: str, check_tensors: bool) -> ObjectRecord:
    _require(raw.get("clip_id") == clip.clip_id,
             f"{where}: record clip_id {raw.get('clip_id')!r} does not match clip {clip.clip_id!r}")
    frame_index = raw.get("frame_index")
    _require(isinstance(frame_index, int) and not isinstance(frame_index, bool) and frame_index >= 0,
             f"{where}: frame_index must be a non-negative integer")
    _require(frame_index < clip.num_frames,
             f"{where}: frame_index {frame_index} >= num_frames {clip.num_frames}")

    bbox_raw = raw.get("bbox")
    _require(isinstance(bbox_raw, list) and len(bbox_raw) == 4, f"{where}: bbox must be [x_min, y_min, x_max, y_max]")
    bbox = BoundingBox(*(_coerce_number(v, where, "bbox coordinate") for v in bbox_raw))
    bbox.validate(where)

    class_label = raw.get("class_label")
    _require(isinstance(class_label, int) and not isinstance(class_label, bool),
             f"{where}: class_label must be an integer")
    confidence = _coerce_number(raw.get("confidence"), where, "confidence")
    _require(0.0 <= confidence <= 1.0, f"{where}: confidence {confidence} outside [0, 1]")

    flow_crop = None
    flow_raw = raw.get("flow_crop")
    if flow_raw is not None:
        _require(isinstance(flow_raw, dict), f"{where}: flow_crop must be an object")
        _require(flow_raw.get("dtype") == "float32", f"{where}: flow_crop dtype must be float32")
        shape = flow_raw.get("shape")
        _require(isinstance(shape, list) and len(shape) == 3 and shape[2] == 2
                 and all(isinstance(s, int) and s >= 1 for s in shape),
                 f"{where}: flow_crop shape must be [h, w, 2] with positive dims")
        rel = flow_raw.get("path")
        _require(isinstance(rel, str) and rel, f"{where}: flow_crop needs a path")
        flow_crop = TensorRef(path=rel, dtype="float32", shape=tuple(shape))
        if check_tensors:
            full = split_dir / rel
            if not full.is_file():
                raise ValidationError(f"{where}: flow crop file {full} does not exist")
            try:
                code, _ = tensorfile.check_payload_size(full, expected_shape=flow_crop.shape)
            except tensorfile.TensorFormatError as exc:
                raise ValidationError(f"{where}: {exc}") from exc
            _require(code == 1, f"{where}: flow crop file {full} must be float32 (dtype code 1)")

    keypoints = None
    kp_raw = raw.get("keypoints")
    if kp_raw is not None:
        _require(isinstance(kp_raw, list), f"{where}: keypoints must be a list of [x, y] pairs")
        _require(len(kp_raw) == manifest.keypoint_count,
                 f"{where}: record has {len(kp_raw)} keypoints, dataset declares d={manifest.keypoint_count}")
        pts = []
        for pair in kp_raw:
            _require(isinstance(pair, list) and len(pair) == 2, f"{where}: each keypoint must be an [x, y] pair")
            pts.append([_coerce_number(pair[0], where, "keypoint x"), _coerce_number(pair[1], where, "keypoint y")])
        keypoints = np.asarray(pts, dtype=np.float64)
        _require(bool(np.isfinite(keypoints).all()), f"{where}: keypoints contain non-finite values")

    embedding = None
    emb_raw = raw.get("embedding")
    if emb_raw is not None:
        _require(manifest.embedding_dim is not None,
                 f"{where}: record carries an embedding but the manifest declares no embedding_dim")
        _require(isinstance(emb_raw, list) and len(emb_raw) == manifest.embedding_dim,
                 f"{where}: embedding length {len(emb_raw) if isinstance(emb_raw, list) else '?'} "
                 f"!= declared D={manifest.embedding_dim}")
        embedding = np.asarray([_coerce_number(v, where, "embedding entry") for v in emb_raw], dtype=np.float64)
        _require(bool(np.isfinite(embedding).all()), f"{where}: embedding contains non-finite values")

    return ObjectRecord(clip_id=clip.clip_id, frame_index=frame_index, bbox=bbox,
                        class_label=class_label, confidence=confidence,
                        flow_crop=flow_crop, keypoints=keypoints, embedding=embedding)


def load_dataset(root: str | Path, split: str, check_tensors: bool = True) -> LoadedSplit:
    """Load and validate one split; records come back grouped by clip and frame-ordered.

    Tensor payloads are not read here: flow crop files are checked for
    existence, header, and byte length only (one stat + header read each).
    """
    _require(split in SPLITS, f"unknown split {split!r}, expected one of {SPLITS}")
    split_dir = Path(root) / split
    manifest = _parse_manifest(split_dir / "manifest.json", split)

    objects_by_clip: dict[str, list[ObjectRecord]] = {}
    for clip in manifest.clips:
        objects_path = split_dir / clip.objects_file
        if not objects_path.is_file():
            raise ValidationError(f"clip {clip.clip_id}: objects file {objects_path} does not exist")
        if manifest.split == "train":
            labels_path = objects_path.parent / LABELS_FILENAME
            _require(not labels_path.exists(),
                     f"clip {clip.clip_id}: train split must not contain label file {labels_path}")
        records = []
        with open(objects_path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                where = f"clip {clip.clip_id} ({objects_path.name}:{lineno})"
                try:
                    raw = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ValidationError(f"{where}: invalid JSON: {exc}") from exc
                records.append(_parse_record(raw, clip, manifest, split_dir, where, check_tensors))
        records.sort(key=lambda r: r.frame_index)  # stable: preserves file order within a frame
        objects_by_clip[clip.clip_id] = records

    return LoadedSplit(manifest=manifest, split_dir=split_dir, objects_by_clip=objects_by_clip)


def load_ground_truth(root: str | Path, manifest: DatasetManifest, split_dir: Path | None = None) -> GroundTruth:
    """Read one labels.txt per clip (next to its objects file)."""
    split_dir = Path(root) / manifest.split if split_dir is None else split_dir
    labels: dict[str, np.ndarray] = {}
    for clip in manifest.clips:
        path = (split_dir / clip.objects_file).parent / LABELS_FILENAME
        if not path.is_file():
            raise ValidationError(f"clip {clip.clip_id}: missing label file {path}")
        tokens = path.read_text(encoding="utf-8").split()
        values = []
        for tok in tokens:
            if tok not in ("0", "1"):
                raise ValidationError(f"label file {path}: labels must be 0 or 1, got {tok!r}")
            values.append(int(tok))
        if len(values) != clip.num_frames:
            raise ValidationError(
                f"label file {path}: {len(values)} labels for clip {clip.clip_id} "
                f"with {clip.num_frames} frames")
        labels[clip.clip_id] = np.asarray(values, dtype=np.int8)
    return GroundTruth(labels=labels)


# ---------------------------------------------------------------------------
# Score files: diff-stable TSV of (clip_id, frame_index, score)
# ---------------------------------------------------------------------------

def write_scores(scores: Mapping[str, Sequence[float]], path: str | Path) -> None:
    """Write per-clip frame scores as headerless TSV, one frame per line."""
    path = Path(path)
    lines = []
    for clip_id, values in scores.items():
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 1:
            raise ValidationError(f"scores for clip {clip_id} must be a flat vector")
        if not np.isfinite(arr).all():
            bad = int(np.flatnonzero(~np.isfinite(arr))[0])
            raise ValidationError(f"scores for clip {clip_id} contain non-finite value at frame {bad}")
        for frame_index, value in enumerate(arr):
            lines.append(f"{clip_id}\t{frame_index}\t{float(value)!r}\n")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(lines)


def read_scores(path: str | Path) -> dict[str, np.ndarray]:
    """Parse a score file back into per-clip vectors (clip order preserved)."""
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"score file {path} does not exist")
    per_clip: dict[str, list[float]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValidationError(f"score file {path}:{lineno}: expected 3 tab-separated fields")
            clip_id, frame_str, score_str = parts
            try:
                frame_index = int(frame_str)
                value = float(score_str)
            except ValueError as exc:
                raise ValidationError(f"score file {path}:{lineno}: {exc}") from exc
            bucket = per_clip.setdefault(clip_id, [])
            if frame_index != len(bucket):
                raise ValidationError(
                    f"score file {path}:{lineno}: frame_index {frame_index} out of order "
                    f"for clip {clip_id} (expected {len(bucket)})")
            if not math.isfinite(value):
                raise ValidationError(f"score file {path}:{lineno}: non-finite score")
            bucket.append(value)
    return {clip: np.asarray(vals, dtype=np.float64) for clip, vals in per_clip.items()}


# ---------------------------------------------------------------------------
# Writer used by the synthetic generator (and anything else producing datasets)
# ---------------------------------------------------------------------------

def _record_to_json(record: ObjectRecord) -> dict:
    out: dict = {
        "clip_id": record.clip_id,
        "frame_index": record.frame_index,
        "bbox": [record.bbox.x_min, record.bbox.y_min, record.bbox.x_max, record.bbox.y_max],
        "class_label": record.class_label,
        "confidence": record.confidence,
    }
    if record.flow_crop is not None:
        out["flow_crop"] = {"path": record.flow_crop.path, "dtype": record.flow_crop.dtype,
                            "shape": list(record.flow_crop.shape)}
    if record.keypoints is not None:
        out["keypoints"] = [[float(x), float(y)] for x, y in np.asarray(record.keypoints)]
    if record.embedding is not None:
        out["embedding"] = [float(v) for v in np.asarray(record.embedding)]
    return out


def write_split(root: str | Path, manifest: DatasetManifest,
                objects_by_clip: Mapping[str, Iterable[ObjectRecord]],
                flow_crops: Mapping[str, np.ndarray] | None = None,
                labels: Mapping[str, Sequence[int]] | None = None) -> Path:
    """Write a split directory: manifest, per-clip jsonl, tensor blobs, labels.

    `flow_crops` maps split-relative tensor paths to float32 arrays. Output
    is deterministic: byte-identical for identical inputs.
    """
    split_dir = Path(root) / manifest.split
    split_dir.mkdir(parents=True, exist_ok=True)

    manifest_json = {
        "generator": GENERATOR_STAMP,
        "split": manifest.split,
        "keypoint_count": manifest.keypoint_count,
        "embedding_dim": manifest.embedding_dim,
        "clips": [{"clip_id": c.clip_id, "num_frames": c.num_frames, "objects_file": c.objects_file}
                  for c in manifest.clips],
    }
    with open(split_dir / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest_json, fh, indent=2, sort_keys=True)
        fh.write("\n")

    for clip in manifest.clips:
        objects_path = split_dir / clip.objects_file
        objects_path.parent.mkdir(parents=True, exist_ok=True)
        with open(objects_path, "w", encoding="utf-8", newline="\n") as fh:
            for record in objects_by_clip.get(clip.clip_id, ()):
                fh.write(json.dumps(_record_to_json(record), sort_keys=True, separators=(",", ":")))
                fh.write("\n")
        if labels is not None and clip.clip_id in labels:
            values = labels[clip.clip_id]
            with open(objects_path.parent / LABELS_FILENAME, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(" ".join(str(int(v)) for v in values))
                fh.write("\n")

    if flow_crops:
        for rel, arr in flow_crops.items():
            tensorfile.write_tensor(split_dir / rel, np.asarray(arr, dtype=np.float32))
    return split_dir
