"""Turn teacher segment scores into soft pseudo-labels."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataio import SegmentDataset
from .models import Model


def moving_average(scores, width: int) -> np.ndarray:
    """Centered box filter of odd ``width`` with edge-replication padding."""
    scores = np.asarray(scores, dtype=np.float64)
    if width < 1 or width % 2 == 0:
        raise ValueError(f"moving-average width must be a positive odd integer, got {width}")
    if width > scores.shape[-1]:
        raise ValueError(f"width {width} exceeds sequence length {scores.shape[-1]}")
    half = width // 2
    pad = [(0, 0)] * (scores.ndim - 1) + [(half, half)]
    padded = np.pad(scores, pad, mode="edge")
    # explicit windows rather than a cumsum difference: width 1 stays exact
    return np.lib.stride_tricks.sliding_window_view(padded, width, axis=-1).mean(axis=-1)


def min_max_normalize(scores) -> np.ndarray:
    """Rescale each sequence (last axis) to ``[0, 1]``; constant ones map to zeros."""
    scores = np.asarray(scores, dtype=np.float64)
    lo = scores.min(axis=-1, keepdims=True)
    span = scores.max(axis=-1, keepdims=True) - lo
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (scores - lo) / safe, 0.0)


def refine(scores, width: int = 3, smooth: bool = True, normalize: bool = True) -> np.ndarray:
    out = np.asarray(scores, dtype=np.float64)
    if smooth:
        out = moving_average(out, width)
    if normalize:
        out = min_max_normalize(out)
    return out


@dataclass
class PseudoLabelStore:
    ids: list[str]
    labels: np.ndarray  # (n_videos, n_s), every entry in [0, 1]
    width: int = 3
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.labels.shape[0] != len(self.ids):
            raise ValueError("one label row per video is required")
        if np.any(self.labels < 0) or np.any(self.labels > 1):
            raise ValueError("pseudo-labels must lie in [0, 1]")

    def for_ids(self, ids) -> np.ndarray:
        pos = {v: i for i, v in enumerate(self.ids)}
        missing = [v for v in ids if v not in pos]
        if missing:
            raise KeyError(f"no pseudo-labels for {missing[:3]}")
        return self.labels[[pos[v] for v in ids]]


def build_pseudo_labels(teacher: Model | None, data: SegmentDataset, width: int = 3,
                        smooth: bool = True, normalize: bool = True) -> PseudoLabelStore:
    """Refined teacher scores for anomalous videos, zeros for normal ones."""
    if teacher is None:
        raise ValueError("a trained teacher is required to build pseudo-labels")
    labels = np.zeros((len(data), data.n_segments))
    anom = np.flatnonzero(data.labels == 1)
    if len(anom):
        raw = teacher.scores([s[anom] for s in data.streams])
        labels[anom] = refine(raw, width, smooth, normalize)
    return PseudoLabelStore(list(data.ids), labels, width)


def write_pseudo_labels(store: PseudoLabelStore, path, fingerprint: str = "") -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# config {fingerprint}\n")
        w = csv.writer(fh)
        w.writerow(["videoId", "segmentIndex", "label"])
        for vid, row in zip(store.ids, store.labels):
            for i, y in enumerate(row):
                w.writerow([vid, i, repr(float(y))])


def read_pseudo_labels(path) -> PseudoLabelStore:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"pseudo-label file not found: {path}")
    rows: dict[str, dict[int, float]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(line for line in fh if not line.startswith("#"))
        for r in reader:
            rows.setdefault(r["videoId"], {})[int(r["segmentIndex"])] = float(r["label"])
    ids = list(rows)
    n_s = max(len(v) for v in rows.values())
    labels = np.array([[rows[v][i] for i in range(n_s)] for v in ids])
    return PseudoLabelStore(ids, labels)
