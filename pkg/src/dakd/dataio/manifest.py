"""Dataset manifest: an INI-style text file, one section per video.

Example::

    [dataset]
    version = 1
    streams = s1, s2, s3
    student_stream = s3

    [video:test_0003]
    split = test
    label = 1
    frames = 960
    intervals = 112-240
    class = class2
    features.s1 = features/test_0003.s1.dakf
    features.s2 = features/test_0003.s2.dakf
    features.s3 = features/test_0003.s3.dakf

Intervals are half-open frame ranges ``start-end`` separated by ``;``.
Feature paths are relative to the manifest's directory.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

MANIFEST_VERSION = 1


class ManifestError(ValueError):
    pass


@dataclass
class VideoRecord:
    id: str
    split: str
    label: int
    frames: int
    features: dict[str, str]
    intervals: list[tuple[int, int]] = field(default_factory=list)
    anomaly_class: str | None = None


@dataclass
class DatasetManifest:
    streams: list[str]
    student_stream: str
    videos: list[VideoRecord]
    root: Path = Path(".")

    def validate(self) -> None:
        if not self.streams:
            raise ManifestError("manifest lists no streams")
        if self.student_stream not in self.streams:
            raise ManifestError(f"student stream {self.student_stream!r} not among {self.streams}")
        seen = set()
        for v in self.videos:
            if v.id in seen:
                raise ManifestError(f"duplicate video id {v.id!r}")
            seen.add(v.id)
            if v.split not in ("train", "test"):
                raise ManifestError(f"{v.id}: unknown split {v.split!r}")
            if v.label not in (0, 1):
                raise ManifestError(f"{v.id}: label must be 0 or 1")
            if set(v.features) != set(self.streams):
                raise ManifestError(f"{v.id}: streams {sorted(v.features)} != {sorted(self.streams)}")
            if v.split == "test" and v.label == 1 and not v.intervals:
                raise ManifestError(f"{v.id}: anomalous test video without intervals")
            for lo, hi in v.intervals:
                if not 0 <= lo < hi <= v.frames:
                    raise ManifestError(f"{v.id}: interval {lo}-{hi} outside 0..{v.frames}")

    def feature_path(self, video: VideoRecord, stream: str) -> Path:
        return self.root / video.features[stream]


def _format_intervals(intervals) -> str:
    return ";".join(f"{lo}-{hi}" for lo, hi in intervals)


def _parse_intervals(text: str, vid: str) -> list[tuple[int, int]]:
    out = []
    for part in filter(None, (p.strip() for p in text.split(";"))):
        try:
            lo, hi = (int(x) for x in part.split("-"))
        except ValueError as exc:
            raise ManifestError(f"{vid}: malformed interval {part!r}") from exc
        out.append((lo, hi))
    return out


def write_manifest(manifest: DatasetManifest, path) -> None:
    manifest.validate()
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp["dataset"] = {
        "version": str(MANIFEST_VERSION),
        "streams": ", ".join(manifest.streams),
        "student_stream": manifest.student_stream,
    }
    for v in manifest.videos:
        sec = {
            "split": v.split,
            "label": str(v.label),
            "frames": str(v.frames),
            "intervals": _format_intervals(v.intervals),
            "class": v.anomaly_class or "",
        }
        for s in manifest.streams:
            sec[f"features.{s}"] = v.features[s]
        cp[f"video:{v.id}"] = sec
    with open(path, "w") as fh:
        cp.write(fh)


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(path.read_text())
    except configparser.Error as exc:
        raise ManifestError(f"{path}: {exc}") from exc
    if "dataset" not in cp:
        raise ManifestError(f"{path}: missing [dataset] section")
    head = cp["dataset"]
    if head.get("version") != str(MANIFEST_VERSION):
        raise ManifestError(f"{path}: unsupported manifest version {head.get('version')!r}")
    streams = [s.strip() for s in head.get("streams", "").split(",") if s.strip()]
    videos = []
    for name in cp.sections():
        if not name.startswith("video:"):
            continue
        sec = cp[name]
        vid = name[len("video:"):]
        try:
            rec = VideoRecord(
                id=vid,
                split=sec["split"],
                label=int(sec["label"]),
                frames=int(sec["frames"]),
                intervals=_parse_intervals(sec.get("intervals", ""), vid),
                anomaly_class=sec.get("class") or None,
                features={k[len("features."):]: v for k, v in sec.items() if k.startswith("features.")},
            )
        except (KeyError, ValueError) as exc:
            raise ManifestError(f"{vid}: {exc}") from exc
        videos.append(rec)
    manifest = DatasetManifest(streams, head.get("student_stream", ""), videos, path.parent)
    manifest.validate()
    return manifest
