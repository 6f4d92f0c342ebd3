"""Rendering of evaluation outputs: per-clip TSV, score curves, AUROC bars."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import EvalReport


def format_report_table(report: EvalReport) -> str:
    """Human-readable summary table."""
    lines = [
        f"{'clip_id':<20} {'frames':>7} {'anomalous':>9} {'auroc':>8}",
        "-" * 47,
    ]
    for clip in report.per_clip:
        auroc = "skipped" if clip.skipped else f"{clip.auroc:.4f}"
        lines.append(f"{clip.clip_id:<20} {clip.num_frames:>7} {clip.num_anomalous:>9} {auroc:>8}")
    lines.append("-" * 47)
    lines.append(f"micro AUROC: {report.micro_auroc:.4f}")
    lines.append(f"macro AUROC: {report.macro_auroc:.4f}  "
                 f"(over {len(report.per_clip) - report.skipped_clips} clips, "
                 f"{report.skipped_clips} skipped)")
    return "\n".join(lines)


def write_per_clip_tsv(report: EvalReport, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("clip_id\tnum_frames\tnum_anomalous\tauroc\n")
        for clip in report.per_clip:
            auroc = "" if clip.skipped else repr(clip.auroc)
            fh.write(f"{clip.clip_id}\t{clip.num_frames}\t{clip.num_anomalous}\t{auroc}\n")


def _shade_anomalies(ax, labels: np.ndarray) -> None:
    labels = np.asarray(labels)
    changes = np.flatnonzero(np.diff(labels) != 0) + 1
    bounds = np.concatenate([[0], changes, [labels.shape[0]]])
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        if labels[lo] == 1:
            ax.axvspan(lo, hi - 1, color="tab:red", alpha=0.2, linewidth=0)


def render_figures(scores_by_clip: Mapping[str, np.ndarray],
                   ground_truth: Mapping[str, np.ndarray],
                   report: EvalReport, out_dir: str | Path) -> list[Path]:
    """Write one score-curve PNG per clip plus a per-clip AUROC bar chart."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    for clip in report.per_clip:
        scores = np.asarray(scores_by_clip[clip.clip_id], dtype=np.float64)
        fig, ax = plt.subplots(figsize=(8, 3))
        _shade_anomalies(ax, ground_truth[clip.clip_id])
        ax.plot(scores, color="tab:blue", linewidth=1.2)
        ax.set_xlabel("frame")
        ax.set_ylabel("anomaly score")
        title = clip.clip_id if clip.skipped else f"{clip.clip_id}  (AUROC {clip.auroc:.3f})"
        ax.set_title(title)
        ax.set_xlim(0, max(len(scores) - 1, 1))
        fig.tight_layout()
        path = out_dir / f"scores_{clip.clip_id}.png"
        fig.savefig(path, dpi=110)
        plt.close(fig)
        written.append(path)

    evaluable = [c for c in report.per_clip if not c.skipped]
    if evaluable:
        fig, ax = plt.subplots(figsize=(max(4, 0.6 * len(evaluable) + 2), 3.5))
        names = [c.clip_id for c in evaluable]
        values = [c.auroc for c in evaluable]
        ax.bar(names, values, color="tab:blue")
        ax.axhline(report.micro_auroc, color="tab:orange", linestyle="--",
                   linewidth=1.0, label=f"micro {report.micro_auroc:.3f}")
        ax.axhline(report.macro_auroc, color="tab:green", linestyle=":",
                   linewidth=1.0, label=f"macro {report.macro_auroc:.3f}")
        ax.set_ylim(0.0, 1.05)
        ax.set_ylabel("frame-level AUROC")
        ax.tick_params(axis="x", rotation=45)
        ax.legend(loc="lower right")
        fig.tight_layout()
        path = out_dir / "auroc_per_clip.png"
        fig.savefig(path, dpi=110)
        plt.close(fig)
        written.append(path)
    return written
