"""Frame-level ROC AUC / average precision and per-class reports."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .dataio import SegmentDataset


def expand_to_frames(seg_scores, n_frames: int) -> np.ndarray:
    """Frame ``f`` takes the score of segment ``floor(f * n_s / n_f)``."""
    seg_scores = np.asarray(seg_scores, dtype=np.float64)
    n_s = len(seg_scores)
    if n_s < 1 or n_frames < 1:
        raise ValueError("need at least one segment and one frame")
    return seg_scores[(np.arange(n_frames) * n_s) // n_frames]


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC with ties counted as one half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC AUC needs both positive and negative labels")
    ranks = rankdata(scores)  # midranks for ties
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def average_precision(scores, labels) -> float:
    """Sum of precision at each recall step over a descending-score sweep.

    Ties keep their original order (stable sort), so each sample is its own
    threshold step.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise ValueError("average precision needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    hits = labels[order]
    tp = np.cumsum(hits)
    precision = tp / np.arange(1, len(hits) + 1)
    return float(precision[hits].sum() / n_pos)


@dataclass
class FrameSeries:
    video_ids: list[str]
    scores: list[np.ndarray]
    labels: list[np.ndarray]

    def concat(self, idx=None):
        idx = range(len(self.video_ids)) if idx is None else idx
        return (np.concatenate([self.scores[i] for i in idx]),
                np.concatenate([self.labels[i] for i in idx]))


def frame_series(data: SegmentDataset, seg_scores: np.ndarray) -> FrameSeries:
    scores = [expand_to_frames(seg_scores[i], int(data.frames[i])) for i in range(len(data))]
    labels = [data.frame_labels(i) for i in range(len(data))]
    return FrameSeries(list(data.ids), scores, labels)


def per_class_report(data: SegmentDataset, seg_scores: np.ndarray, classes=None) -> dict[str, float]:
    """AUC per anomaly class over that class's anomalous videos plus every normal video."""
    series = frame_series(data, seg_scores)
    normals = [i for i in range(len(data)) if data.labels[i] == 0]
    classes = classes or sorted({c for c, y in zip(data.classes, data.labels) if y == 1 and c})
    report = {}
    for c in classes:
        members = [i for i in range(len(data)) if data.labels[i] == 1 and data.classes[i] == c]
        if not members:
            raise ValueError(f"class {c!r} has no anomalous videos")
        report[c] = roc_auc(*series.concat(members + normals))
    return report


@dataclass
class MetricReport:
    auc: float
    ap: float
    per_class: dict[str, float]

    def rows(self):
        yield "auc", "all", self.auc
        yield "ap", "all", self.ap
        for c, v in self.per_class.items():
            yield "auc", c, v

    def summary(self) -> str:
        cls = " ".join(f"{c}={v:.4f}" for c, v in self.per_class.items())
        return f"AUC={self.auc:.4f} AP={self.ap:.4f} {cls}".strip()


def evaluate(data: SegmentDataset, seg_scores: np.ndarray) -> MetricReport:
    series = frame_series(data, seg_scores)
    scores, labels = series.concat()
    return MetricReport(roc_auc(scores, labels), average_precision(scores, labels),
                        per_class_report(data, seg_scores))
