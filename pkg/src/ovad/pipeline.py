"""End-to-end orchestration: extract features, fit models, score test clips.

The fitted state (density models, calibration bounds, pose target size,
config snapshot) is bundled into an artifact directory that can be
reloaded to score any compatible dataset. Refitting with the same seed
reproduces the artifact byte for byte.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import GENERATOR_STAMP, density, velocity
from .config import PipelineConfig, config_from_json_dict
from .dataset import LoadedSplit, ObjectRecord, load_dataset
from .errors import CompatibilityError, ValidationError
from .fusion import CalibrationParams, FeatureCalibration, calibrate, smooth_scores
from .pose import PoseTargetSize, compute_pose_target_size, normalize_keypoints
from .seeding import derive_seed


@dataclass
class FeatureRows:
    """One feature's matrix over all objects that carry it, row-aligned metadata."""

    matrix: np.ndarray        # (N, dim) float64
    clip_ids: np.ndarray      # (N,) str
    frame_indices: np.ndarray  # (N,) int64


@dataclass
class Artifact:
    config: PipelineConfig
    models: dict[str, density.DensityModel]
    calibration: CalibrationParams
    pose_target: PoseTargetSize | None
    keypoint_count: int | None
    embedding_dim: int | None


def _feature_dim(feature: str, config: PipelineConfig, embedding_dim: int | None) -> int:
    if feature == "velocity":
        return config.velocity_bins
    if feature == "pose":
        return 2 * config.pose_keypoints
    if feature == "deep":
        if embedding_dim is None:
            raise ValidationError("feature 'deep' enabled but dataset has no embeddings")
        return embedding_dim
    raise ValidationError(f"unknown feature {feature!r}")


def _clip_feature_lists(split: LoadedSplit, records: list[ObjectRecord], config: PipelineConfig,
                        pose_target: PoseTargetSize | None) -> dict[str, tuple[list, list]]:
    out: dict[str, tuple[list, list]] = {f: ([], []) for f in config.features}
    for rec in records:
        if "velocity" in out and rec.flow_crop is not None:
            crop = split.load_flow_crop(rec)
            resized = velocity.resize_flow_crop(crop, config.velocity_resize)
            height = rec.bbox.height if config.velocity_normalize_by_height else None
            feats, frames = out["velocity"]
            feats.append(velocity.velocity_histogram(resized, config.velocity_bins, height))
            frames.append(rec.frame_index)
        if "pose" in out and rec.keypoints is not None:
            feats, frames = out["pose"]
            feats.append(normalize_keypoints(rec.keypoints, rec.bbox, pose_target))
            frames.append(rec.frame_index)
        if "deep" in out and rec.embedding is not None:
            feats, frames = out["deep"]
            feats.append(np.asarray(rec.embedding, dtype=np.float64))
            frames.append(rec.frame_index)
    return out


def extract_feature_tables(split: LoadedSplit, config: PipelineConfig,
                           pose_target: PoseTargetSize | None = None,
                           threads: int = 1) -> dict[str, FeatureRows]:
    """Compute per-object features for every enabled feature, clip-parallel."""
    if "pose" in config.features and pose_target is None:
        raise ValidationError("pose feature requires a pose target size")
    clip_order = [c.clip_id for c in split.manifest.clips]

    def worker(clip_id: str):
        return _clip_feature_lists(split, split.objects_by_clip[clip_id], config, pose_target)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_clip = list(pool.map(worker, clip_order))
    else:
        per_clip = [worker(c) for c in clip_order]

    tables: dict[str, FeatureRows] = {}
    for feature in config.features:
        dim = _feature_dim(feature, config, split.manifest.embedding_dim)
        mats, clips, frames = [], [], []
        for clip_id, lists in zip(clip_order, per_clip):
            feats, frame_idx = lists[feature]
            if feats:
                mats.append(np.asarray(feats, dtype=np.float64))
                clips.extend([clip_id] * len(feats))
                frames.extend(frame_idx)
        matrix = np.concatenate(mats, axis=0) if mats else np.zeros((0, dim), dtype=np.float64)
        tables[feature] = FeatureRows(matrix=matrix,
                                      clip_ids=np.asarray(clips, dtype=object),
                                      frame_indices=np.asarray(frames, dtype=np.int64))
    return tables


def _leave_own_clip_out_scores(index: density.ExemplarIndex, rows: FeatureRows, feature: str) -> np.ndarray:
    out = np.empty(rows.matrix.shape[0], dtype=np.float64)
    for clip in sorted(set(rows.clip_ids.tolist())):
        sel = rows.clip_ids == clip
        try:
            out[sel] = density.knn_scores(index, rows.matrix[sel], exclude_clip=clip)
        except ValueError as exc:
            raise ValidationError(
                f"feature {feature!r}: kNN calibration excludes the object's own clip, "
                f"so the training set needs at least 2 clips ({exc})") from exc
    return out


def _raw_scores(feature: str, model: density.DensityModel, matrix: np.ndarray) -> np.ndarray:
    if isinstance(model, density.GmmModel):
        return density.gmm_scores(model, matrix)
    if isinstance(model, density.ExemplarIndex):
        return density.knn_scores(model, matrix)
    return density.kmeans_scores(model, matrix)


def compute_train_pose_target(split: LoadedSplit, config: PipelineConfig) -> PoseTargetSize | None:
    """Mean human-box size over the train split; None when pose is disabled."""
    if "pose" not in config.features:
        return None
    if split.manifest.keypoint_count != config.pose_keypoints:
        raise CompatibilityError(
            f"config expects d={config.pose_keypoints} keypoints, "
            f"dataset declares d={split.manifest.keypoint_count}")
    human_boxes = [rec.bbox
                   for records in split.objects_by_clip.values()
                   for rec in records if rec.class_label == config.human_class]
    if not human_boxes:
        raise ValidationError("feature 'pose' enabled but dataset has no "
                              f"objects of human class {config.human_class}")
    return compute_pose_target_size(human_boxes)


def fit(dataset_root: str | Path, config: PipelineConfig, threads: int = 1) -> Artifact:
    """Fit density models and calibration on the train split."""
    config.validate()
    split = load_dataset(dataset_root, "train")
    pose_target = compute_train_pose_target(split, config)
    tables = extract_feature_tables(split, config, pose_target=pose_target, threads=threads)
    return fit_tables(split, tables, config, pose_target)


def fit_tables(split: LoadedSplit, tables: dict[str, FeatureRows], config: PipelineConfig,
               pose_target: PoseTargetSize | None) -> Artifact:
    """Fit from precomputed feature tables (shared by sweeps over model settings)."""
    for feature in config.features:
        if tables[feature].matrix.shape[0] == 0:
            noun = {"velocity": "flow crops", "pose": "keypoints", "deep": "embeddings"}[feature]
            raise ValidationError(f"feature {feature!r} enabled but dataset has no {noun}")

    models: dict[str, density.DensityModel] = {}
    train_scores: dict[str, np.ndarray] = {}
    for feature in config.features:
        rows = tables[feature]
        if feature == "velocity":
            model = density.fit_gmm(rows.matrix, config.gmm_components,
                                    derive_seed(config.seed, "gmm-velocity"))
            train_scores[feature] = density.gmm_scores(model, rows.matrix)
        elif config.kmeans_k is not None:
            model = density.fit_kmeans(rows.matrix, config.kmeans_k,
                                       derive_seed(config.seed, f"kmeans-{feature}"))
            train_scores[feature] = density.kmeans_scores(model, rows.matrix)
        else:
            model = density.build_exemplar_index(rows.matrix, rows.clip_ids.tolist(), config.knn_k)
            train_scores[feature] = _leave_own_clip_out_scores(model, rows, feature)
        models[feature] = model

    calibration = calibrate(train_scores)
    return Artifact(config=config, models=models, calibration=calibration, pose_target=pose_target,
                    keypoint_count=split.manifest.keypoint_count if "pose" in config.features else None,
                    embedding_dim=split.manifest.embedding_dim if "deep" in config.features else None)


def check_compatibility(artifact: Artifact, split: LoadedSplit) -> None:
    config = artifact.config
    if "pose" in config.features and split.manifest.keypoint_count != artifact.keypoint_count:
        raise CompatibilityError(
            f"artifact was fitted with d={artifact.keypoint_count} keypoints, "
            f"dataset declares d={split.manifest.keypoint_count}")
    if "deep" in config.features and split.manifest.embedding_dim != artifact.embedding_dim:
        raise CompatibilityError(
            f"artifact was fitted with embedding_dim={artifact.embedding_dim}, "
            f"dataset declares embedding_dim={split.manifest.embedding_dim}")


def score(dataset_root: str | Path, artifact: Artifact,
          threads: int = 1) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
    """Score the test split. Returns (smoothed, unsmoothed) per-clip score vectors."""
    split = load_dataset(dataset_root, "test")
    check_compatibility(artifact, split)
    tables = extract_feature_tables(split, artifact.config, pose_target=artifact.pose_target,
                                    threads=threads)
    return score_tables(split, tables, artifact)


def score_tables(split: LoadedSplit, tables: dict[str, FeatureRows],
                 artifact: Artifact) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
    """Score from precomputed feature tables."""
    config = artifact.config
    raw: dict[str, np.ndarray] = {}
    calibrated: dict[str, np.ndarray] = {}
    for feature in config.features:
        raw[feature] = _raw_scores(feature, artifact.models[feature], tables[feature].matrix)
        calibrated[feature] = artifact.calibration[feature].apply(raw[feature])

    unsmoothed: dict[str, np.ndarray] = {}
    smoothed: dict[str, np.ndarray] = {}
    for clip in split.manifest.clips:
        total = np.zeros(clip.num_frames, dtype=np.float64)
        for feature in config.features:
            rows = tables[feature]
            calib = artifact.calibration[feature]
            sel = rows.clip_ids == clip.clip_id
            if calib.degenerate or not sel.any():
                continue
            term = np.full(clip.num_frames, -np.inf)
            np.maximum.at(term, rows.frame_indices[sel], calibrated[feature][sel])
            total += np.where(np.isneginf(term), 0.0, term)
        unsmoothed[clip.clip_id] = total
        smoothed[clip.clip_id] = smooth_scores(total, config.smoothing_sigma)
    return smoothed, unsmoothed


# ---------------------------------------------------------------------------
# Artifact persistence
# ---------------------------------------------------------------------------

def save_artifact(artifact: Artifact, path: str | Path) -> Path:
    path = Path(path)
    (path / "models").mkdir(parents=True, exist_ok=True)
    for feature, model in artifact.models.items():
        density.save_density_model(model, path / "models", feature)
    header = {
        "generator": GENERATOR_STAMP,
        "config": artifact.config.to_json_dict(),
        "keypoint_count": artifact.keypoint_count,
        "embedding_dim": artifact.embedding_dim,
        "pose_target": None if artifact.pose_target is None else
            {"height": artifact.pose_target.height, "width": artifact.pose_target.width},
        "calibration": {feature: {"min": calib.min_score, "max": calib.max_score}
                        for feature, calib in artifact.calibration.per_feature.items()},
    }
    with open(path / "artifact.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def load_artifact(path: str | Path) -> Artifact:
    path = Path(path)
    header_path = path / "artifact.json"
    if not header_path.is_file():
        raise ValidationError(f"missing artifact header {header_path}")
    header = json.loads(header_path.read_text(encoding="utf-8"))
    config = config_from_json_dict(header["config"])
    models = {feature: density.load_density_model(path / "models", feature)
              for feature in config.features}
    calibration = CalibrationParams(per_feature={
        feature: FeatureCalibration(min_score=entry["min"], max_score=entry["max"])
        for feature, entry in header["calibration"].items()})
    pose_target = None
    if header.get("pose_target") is not None:
        pose_target = PoseTargetSize(height=header["pose_target"]["height"],
                                     width=header["pose_target"]["width"])
    return Artifact(config=config, models=models, calibration=calibration, pose_target=pose_target,
                    keypoint_count=header.get("keypoint_count"),
                    embedding_dim=header.get("embedding_dim"))
