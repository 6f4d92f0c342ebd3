"""Pipeline configuration: defaults, named profiles, JSON config files.

Config files use nested sections mirroring the key names below, e.g.:

    {
      "fusion": {"features": ["velocity", "pose", "deep"]},
      "velocity": {"bins": 8, "resize": [224, 224], "normalize_by_height": false},
      "pose": {"keypoints": 17, "human_class": 0},
      "gmm": {"components": 5},
      "knn": {"k": 1},
      "kmeans": {"k": null},
      "smoothing": {"sigma": 3.0},
      "seed": 0
    }

Profiles are applied first, then the config file's keys override them.
The "ped2-like" profile models low-resolution footage: a single
orientation bin, a 2-component mixture, and no pose feature.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

from .errors import ValidationError

FEATURE_NAMES = ("velocity", "pose", "deep")


@dataclass(frozen=True)
class PipelineConfig:
    features: tuple[str, ...] = ("velocity", "pose", "deep")
    velocity_bins: int = 8
    velocity_resize: tuple[int, int] = (224, 224)  # (H, W)
    velocity_normalize_by_height: bool = False
    pose_keypoints: int = 17
    human_class: int = 0
    gmm_components: int = 5
    knn_k: int = 1
    kmeans_k: int | None = None  # set to enable centroid-compressed scoring
    smoothing_sigma: float = 3.0
    seed: int = 0
    detector_confidence: float | None = None  # provenance only; applied by extractors

    def validate(self) -> None:
        if not self.features:
            raise ValidationError("at least one feature must be enabled")
        for f in self.features:
            if f not in FEATURE_NAMES:
                raise ValidationError(f"unknown feature {f!r}, expected subset of {FEATURE_NAMES}")
        if len(set(self.features)) != len(self.features):
            raise ValidationError("features list contains duplicates")
        if self.velocity_bins < 1:
            raise ValidationError("velocity.bins must be >= 1")
        if self.velocity_resize[0] < 1 or self.velocity_resize[1] < 1:
            raise ValidationError("velocity.resize dims must be >= 1")
        if self.pose_keypoints < 1:
            raise ValidationError("pose.keypoints must be >= 1")
        if self.gmm_components < 1:
            raise ValidationError("gmm.components must be >= 1")
        if self.knn_k < 1:
            raise ValidationError("knn.k must be >= 1")
        if self.kmeans_k is not None and self.kmeans_k < 1:
            raise ValidationError("kmeans.k must be >= 1 when set")
        if not self.smoothing_sigma > 0:
            raise ValidationError("smoothing.sigma must be positive")
        if self.detector_confidence is not None and not (0.0 < self.detector_confidence <= 1.0):
            raise ValidationError("detector confidence must lie in (0, 1]")

    def to_json_dict(self) -> dict:
        return {
            "fusion": {"features": list(self.features)},
            "velocity": {"bins": self.velocity_bins, "resize": list(self.velocity_resize),
                         "normalize_by_height": self.velocity_normalize_by_height},
            "pose": {"keypoints": self.pose_keypoints, "human_class": self.human_class},
            "gmm": {"components": self.gmm_components},
            "knn": {"k": self.knn_k},
            "kmeans": {"k": self.kmeans_k},
            "smoothing": {"sigma": self.smoothing_sigma},
            "seed": self.seed,
            "extractor": {"confidence_threshold": self.detector_confidence},
        }


PROFILES: dict[str, PipelineConfig] = {
    "default": PipelineConfig(),
    "ped2-like": PipelineConfig(features=("velocity", "deep"), velocity_bins=1, gmm_components=2),
}


def _section(raw: dict, name: str) -> dict:
    value = raw.get(name, {})
    if not isinstance(value, dict):
        raise ValidationError(f"config section {name!r} must be an object")
    return value


def config_from_json_dict(raw: dict, base: PipelineConfig | None = None) -> PipelineConfig:
    cfg = base if base is not None else PipelineConfig()
    fusion = _section(raw, "fusion")
    if "features" in fusion:
        cfg = replace(cfg, features=tuple(fusion["features"]))
    velocity = _section(raw, "velocity")
    if "bins" in velocity:
        cfg = replace(cfg, velocity_bins=int(velocity["bins"]))
    if "resize" in velocity:
        size = velocity["resize"]
        if not (isinstance(size, list) and len(size) == 2):
            raise ValidationError("velocity.resize must be [H, W]")
        cfg = replace(cfg, velocity_resize=(int(size[0]), int(size[1])))
    if "normalize_by_height" in velocity:
        cfg = replace(cfg, velocity_normalize_by_height=bool(velocity["normalize_by_height"]))
    pose = _section(raw, "pose")
    if "keypoints" in pose:
        cfg = replace(cfg, pose_keypoints=int(pose["keypoints"]))
    if "human_class" in pose:
        cfg = replace(cfg, human_class=int(pose["human_class"]))
    gmm = _section(raw, "gmm")
    if "components" in gmm:
        cfg = replace(cfg, gmm_components=int(gmm["components"]))
    knn = _section(raw, "knn")
    if "k" in knn:
        cfg = replace(cfg, knn_k=int(knn["k"]))
    kmeans = _section(raw, "kmeans")
    if "k" in kmeans:
        cfg = replace(cfg, kmeans_k=None if kmeans["k"] is None else int(kmeans["k"]))
    smoothing = _section(raw, "smoothing")
    if "sigma" in smoothing:
        cfg = replace(cfg, smoothing_sigma=float(smoothing["sigma"]))
    if "seed" in raw:
        cfg = replace(cfg, seed=int(raw["seed"]))
    extractor = _section(raw, "extractor")
    if "confidence_threshold" in extractor:
        value = extractor["confidence_threshold"]
        cfg = replace(cfg, detector_confidence=None if value is None else float(value))
    cfg.validate()
    return cfg


def load_config(path: str | Path | None = None, profile: str = "default") -> PipelineConfig:
    """Resolve a config: named profile defaults, then optional JSON file overrides."""
    if profile not in PROFILES:
        raise ValidationError(f"unknown profile {profile!r}, expected one of {sorted(PROFILES)}")
    cfg = PROFILES[profile]
    if path is None:
        cfg.validate()
        return cfg
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"config file {path} does not exist")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ValidationError(f"config file {path} must contain a JSON object")
    return config_from_json_dict(raw, base=cfg)
