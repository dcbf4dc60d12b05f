"""Synthetic multi-stream feature generator with planted anomalies.

Every clip feature is isotropic Gaussian noise plus a per-video constant
"scene" offset along the class directions, so a single segment cannot
tell a bright scene from an anomaly while the contrast against the rest
of the video can.  Inside an anomaly interval, stream ``t`` additionally
carries ``snr * gain_t * u_{t,c}`` (scaled by the clip's overlap with the
interval) where ``u_{t,c}`` is a fixed unit direction for class ``c``,
but only if ``c`` is in the stream's visibility set.  Interval lengths are
chosen so the anomalous share of all frames matches the target fraction.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from ..config import SynthConfig
from .features import write_features
from .manifest import DatasetManifest, VideoRecord, write_manifest


def stream_names(n: int) -> list[str]:
    return [f"s{t + 1}" for t in range(n)]


def class_directions(cfg: SynthConfig, rng: np.random.Generator) -> list[dict[str, np.ndarray]]:
    """Orthonormal per-stream class directions.

    Orthogonal so that a detector tuned to some classes is neutral, not
    negative, on the others.
    """
    dirs = []
    for dt in cfg.stream_dims:
        q, r = np.linalg.qr(rng.standard_normal((dt, len(cfg.classes))))
        q = q * np.sign(np.diag(r))
        dirs.append({c: q[:, i].copy() for i, c in enumerate(cfg.classes)})
    return dirs


def clip_overlap(n_clips: int, clip_len: int, intervals) -> np.ndarray:
    """Fraction of each clip's frames that fall inside any interval."""
    frames = np.zeros(n_clips * clip_len)
    for lo, hi in intervals:
        frames[lo:hi] = 1.0
    return frames.reshape(n_clips, clip_len).mean(axis=1)


def plan_videos(cfg: SynthConfig, rng: np.random.Generator) -> list[VideoRecord]:
    """Decide ids, splits, labels, lengths, classes and intervals."""
    lo_c = cfg.frame_range[0] // cfg.clip_len
    hi_c = cfg.frame_range[1] // cfg.clip_len
    plan = []
    groups = [("train", 0, cfg.n_train_normal), ("train", 1, cfg.n_train_anomalous),
              ("test", 0, cfg.n_test_normal), ("test", 1, cfg.n_test_anomalous)]
    counters = {"train": 0, "test": 0}
    for split, label, count in groups:
        for i in range(count):
            n_clips = int(rng.integers(lo_c, hi_c + 1))
            vid = f"{split}_{counters[split]:04d}"
            counters[split] += 1
            cls = cfg.classes[i % len(cfg.classes)] if label else None
            plan.append(VideoRecord(vid, split, label, n_clips * cfg.clip_len, {}, [], cls))

    total = sum(v.frames for v in plan)
    anom = sum(v.frames for v in plan if v.label)
    share = min(cfg.anomaly_fraction * total / anom, 1.0)
    for v in plan:
        if v.label:
            length = max(1, min(v.frames, int(round(share * v.frames))))
            start = int(rng.integers(0, v.frames - length + 1))
            v.intervals = [(start, start + length)]
    return plan


def generate_synthetic(cfg: SynthConfig, out_dir) -> Path:
    """Write feature files plus ``manifest.ini`` under ``out_dir``; return the manifest path."""
    out_dir = Path(out_dir)
    (out_dir / "features").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    names = stream_names(len(cfg.stream_dims))
    directions = class_directions(cfg, rng)
    videos = plan_videos(cfg, rng)

    for v in videos:
        n_clips = v.frames // cfg.clip_len
        overlap = clip_overlap(n_clips, cfg.clip_len, v.intervals)
        for t, (name, dt) in enumerate(zip(names, cfg.stream_dims)):
            x = rng.standard_normal((n_clips, dt))
            x += cfg.background * rng.standard_normal(dt)
            x += cfg.scene_shift * sum(rng.standard_normal() * directions[t][c] for c in cfg.classes)
            if v.label and v.anomaly_class in cfg.visibility[t]:
                x += np.outer(overlap, cfg.snr * cfg.stream_gain[t] * directions[t][v.anomaly_class])
            rel = f"features/{v.id}.{name}.dakf"
            write_features(out_dir / rel, x.astype(np.float32))
            v.features[name] = rel

    manifest = DatasetManifest(names, names[cfg.student_stream], videos, out_dir)
    path = out_dir / "manifest.ini"
    write_manifest(manifest, path)
    return path


def anomalous_fraction(manifest: DatasetManifest) -> float:
    total = sum(v.frames for v in manifest.videos)
    inside = sum(hi - lo for v in manifest.videos for lo, hi in v.intervals)
    return inside / total
