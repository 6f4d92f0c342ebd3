"""Frame-level AUROC evaluation, micro- and macro-averaged.

AUROC is computed exactly from the Mann-Whitney rank statistic with
midrank tie handling. Micro concatenates all test clips before ranking;
macro averages per-clip values, skipping clips whose labels contain only
one class (their AUROC is undefined).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from . import GENERATOR_STAMP
from .errors import SingleClassError, ValidationError


@dataclass(frozen=True)
class ClipResult:
    clip_id: str
    auroc: float | None  # None when the clip has a single label class
    num_frames: int
    num_anomalous: int

    @property
    def skipped(self) -> bool:
        return self.auroc is None


@dataclass(frozen=True)
class EvalReport:
    micro_auroc: float
    macro_auroc: float
    per_clip: tuple[ClipResult, ...]
    skipped_clips: int

    def to_json_dict(self) -> dict:
        return {
            "generator": GENERATOR_STAMP,
            "micro_auroc": self.micro_auroc,
            "macro_auroc": self.macro_auroc,
            "skipped_clips": self.skipped_clips,
            "per_clip": [
                {"clip_id": c.clip_id, "auroc": c.auroc, "num_frames": c.num_frames,
                 "num_anomalous": c.num_anomalous}
                for c in self.per_clip
            ],
        }

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def load_report(path: str | Path) -> EvalReport:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    clips = tuple(ClipResult(clip_id=c["clip_id"], auroc=c["auroc"], num_frames=c["num_frames"],
                             num_anomalous=c["num_anomalous"]) for c in raw["per_clip"])
    return EvalReport(micro_auroc=raw["micro_auroc"], macro_auroc=raw["macro_auroc"],
                      per_clip=clips, skipped_clips=raw["skipped_clips"])


def _midranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks, ties replaced by the mean rank of their group."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(values.shape[0], dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < sorted_vals.shape[0]:
        j = i
        while j + 1 < sorted_vals.shape[0] and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auroc(scores, labels) -> float:
    """Exact AUROC via the rank statistic; raises SingleClassError on one-class labels."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 1 or labels.ndim != 1 or scores.shape[0] != labels.shape[0]:
        raise ValidationError(f"scores and labels must be equal-length vectors, "
                              f"got {scores.shape} and {labels.shape}")
    if scores.shape[0] < 2:
        raise ValidationError("AUROC needs at least 2 frames")
    if not np.isfinite(scores).all():
        raise ValidationError("scores contain non-finite values")
    if not np.isin(labels, (0, 1)).all():
        raise ValidationError("labels must be 0 or 1")
    positives = labels == 1
    n_pos = int(positives.sum())
    n_neg = labels.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError(f"labels contain a single class ({n_pos} positives of {labels.shape[0]})")
    ranks = _midranks(scores)
    u_stat = ranks[positives].sum() - 0.5 * n_pos * (n_pos + 1)
    return float(u_stat / (n_pos * n_neg))


def _check_alignment(scores_by_clip: Mapping[str, np.ndarray], ground_truth: Mapping[str, np.ndarray]) -> None:
    missing_pairs: list[tuple[str, int]] = []
    for clip in sorted(ground_truth):
        labels = ground_truth[clip]
        scored = len(scores_by_clip.get(clip, ()))
        missing_pairs.extend((clip, frame) for frame in range(scored, len(labels)))
    if missing_pairs:
        shown = ", ".join(f"({c}, {f})" for c, f in missing_pairs[:20])
        more = "" if len(missing_pairs) <= 20 else f" and {len(missing_pairs) - 20} more"
        raise ValidationError(f"labeled frames without scores: {shown}{more}")
    extra = sorted(set(scores_by_clip) - set(ground_truth))
    if extra:
        raise ValidationError(f"scored clips without ground truth: {extra}")
    for clip, labels in ground_truth.items():
        if len(scores_by_clip[clip]) != len(labels):
            raise ValidationError(
                f"clip {clip}: {len(scores_by_clip[clip])} scores for {len(labels)} labels")


def micro_auroc(scores_by_clip: Mapping[str, np.ndarray], ground_truth: Mapping[str, np.ndarray]) -> float:
    """AUROC over the concatenation of all clips' frames."""
    _check_alignment(scores_by_clip, ground_truth)
    clips = sorted(ground_truth)
    all_scores = np.concatenate([np.asarray(scores_by_clip[c], dtype=np.float64) for c in clips])
    all_labels = np.concatenate([np.asarray(ground_truth[c]) for c in clips])
    return auroc(all_scores, all_labels)


def macro_auroc(scores_by_clip: Mapping[str, np.ndarray],
                ground_truth: Mapping[str, np.ndarray]) -> tuple[float, list[ClipResult]]:
    """Unweighted mean of per-clip AUROCs; single-class clips are skipped and reported."""
    _check_alignment(scores_by_clip, ground_truth)
    results: list[ClipResult] = []
    values = []
    for clip in sorted(ground_truth):
        labels = np.asarray(ground_truth[clip])
        scores = np.asarray(scores_by_clip[clip], dtype=np.float64)
        try:
            value = auroc(scores, labels)
        except SingleClassError:
            value = None
        if value is not None:
            values.append(value)
        results.append(ClipResult(clip_id=clip, auroc=value, num_frames=int(labels.shape[0]),
                                  num_anomalous=int((labels == 1).sum())))
    if not values:
        raise SingleClassError("no clip has both label classes; macro AUROC is undefined")
    return float(np.mean(values)), results


def evaluate(scores_by_clip: Mapping[str, np.ndarray], ground_truth: Mapping[str, np.ndarray]) -> EvalReport:
    micro = micro_auroc(scores_by_clip, ground_truth)
    macro, per_clip = macro_auroc(scores_by_clip, ground_truth)
    return EvalReport(micro_auroc=micro, macro_auroc=macro, per_clip=tuple(per_clip),
                      skipped_clips=sum(1 for c in per_clip if c.skipped))
