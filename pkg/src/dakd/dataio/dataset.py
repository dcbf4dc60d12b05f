"""In-memory segment-level dataset built from a manifest."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .features import read_features, segment_pool
from .manifest import DatasetManifest, read_manifest


@dataclass
class SegmentDataset:
    ids: list[str]
    splits: np.ndarray  # str array, "train"/"test"
    labels: np.ndarray  # (n_videos,) int
    frames: np.ndarray  # (n_videos,) int
    intervals: list[list[tuple[int, int]]]
    classes: list[str | None]
    streams: list[np.ndarray]  # per stream (n_videos, n_s, d_t) float64
    stream_names: list[str]
    student_stream: str
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def n_segments(self) -> int:
        return self.streams[0].shape[1]

    @property
    def stream_dims(self) -> tuple[int, ...]:
        return tuple(s.shape[2] for s in self.streams)

    def take(self, idx) -> "SegmentDataset":
        idx = np.asarray(idx, dtype=np.intp)
        return replace(
            self,
            ids=[self.ids[i] for i in idx],
            splits=self.splits[idx],
            labels=self.labels[idx],
            frames=self.frames[idx],
            intervals=[self.intervals[i] for i in idx],
            classes=[self.classes[i] for i in idx],
            streams=[s[idx] for s in self.streams],
        )

    def split(self, name: str) -> "SegmentDataset":
        return self.take(np.flatnonzero(self.splits == name))

    def select_streams(self, names) -> "SegmentDataset":
        names = [names] if isinstance(names, str) else list(names)
        missing = [n for n in names if n not in self.stream_names]
        if missing:
            raise KeyError(f"streams {missing} absent (have {self.stream_names})")
        pos = [self.stream_names.index(n) for n in names]
        return replace(self, streams=[self.streams[p] for p in pos], stream_names=names)

    def student_view(self) -> "SegmentDataset":
        return self.select_streams(self.student_stream)

    def frame_labels(self, i: int) -> np.ndarray:
        y = np.zeros(int(self.frames[i]), dtype=np.int8)
        for lo, hi in self.intervals[i]:
            y[lo:hi] = 1
        return y


def load_dataset(manifest: DatasetManifest | str, n_segments: int = 32) -> SegmentDataset:
    if not isinstance(manifest, DatasetManifest):
        manifest = read_manifest(manifest)
    streams = []
    for s in manifest.streams:
        pooled = [segment_pool(read_features(manifest.feature_path(v, s)), n_segments) for v in manifest.videos]
        widths = {p.shape[1] for p in pooled}
        if len(widths) != 1:
            raise ValueError(f"stream {s} has inconsistent widths {sorted(widths)}")
        streams.append(np.stack(pooled))
    vids = manifest.videos
    return SegmentDataset(
        ids=[v.id for v in vids],
        splits=np.array([v.split for v in vids]),
        labels=np.array([v.label for v in vids], dtype=int),
        frames=np.array([v.frames for v in vids], dtype=int),
        intervals=[list(v.intervals) for v in vids],
        classes=[v.anomaly_class for v in vids],
        streams=streams,
        stream_names=list(manifest.streams),
        student_stream=manifest.student_stream,
    )
