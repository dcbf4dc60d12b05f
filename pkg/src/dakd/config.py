"""Configuration dataclasses.

Defaults follow the published setup (512-wide projections, k=25, tau=10,
alpha=7.5, delta=0.9, 100 epochs, Adagrad with wd=1e-3).  ``desk_*``
helpers return the reduced widths and rates used for the synthetic
experiments that have to finish in minutes on one CPU core.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace

COMPONENTS = ("self", "cross", "c2p", "p2c")


@dataclass(frozen=True)
class ModelConfig:
    stream_dims: tuple[int, ...] = (1024, 1024, 512)
    d_model: int = 512
    proj_hidden: int = 512
    n_heads: int = 8
    ffn_hidden: int = 1024
    head_hidden: tuple[int, ...] = (512, 32)
    k: int = 25
    include_cross: bool = True
    components: tuple[str, ...] = COMPONENTS
    use_tam: bool = True
    train_rel_table: bool = True

    def __post_init__(self):
        if not self.stream_dims or any(d < 1 for d in self.stream_dims):
            raise ValueError(f"invalid stream widths {self.stream_dims}")
        if self.d_model < 1 or self.proj_hidden < 1 or self.ffn_hidden < 1:
            raise ValueError("widths must be positive")
        if any(h < 1 for h in self.head_hidden):
            raise ValueError("head widths must be positive")
        if self.n_heads < 1 or self.d_model % self.n_heads:
            raise ValueError(f"{self.n_heads} heads do not divide d_model={self.d_model}")
        if self.k < 1:
            raise ValueError("bucket cap k must be >= 1")
        bad = set(self.components) - set(COMPONENTS)
        if bad or not self.components:
            raise ValueError(f"invalid attention components {self.components}")

    @property
    def n_streams(self) -> int:
        return len(self.stream_dims)

    def active_components(self) -> tuple[str, ...]:
        comps = tuple(c for c in self.components if c != "cross" or self.include_cross)
        return comps or ("self",)

    def single_stream(self, width: int) -> "ModelConfig":
        """Student-style config: one stream, no cross term."""
        return replace(self, stream_dims=(width,), include_cross=False)


@dataclass(frozen=True)
class MilConfig:
    lambda_smooth: float = 8e-5
    lambda_sparse: float = 8e-5
    epochs: int = 100
    n_normal: int = 30
    n_anomalous: int = 30
    lr_temporal: float = 1e-4
    lr_other: float = 1e-3
    weight_decay: float = 1e-3
    eps_opt: float = 1e-10
    bag_k: int = 1

    def __post_init__(self):
        if self.n_normal < 1 or self.n_anomalous < 1:
            raise ValueError("batch counts must be positive")
        if self.lr_temporal <= 0 or self.lr_other <= 0:
            raise ValueError("learning rates must be positive")
        if self.lambda_smooth < 0 or self.lambda_sparse < 0:
            raise ValueError("regularisation weights must be non-negative")
        if self.epochs < 0 or self.bag_k < 1:
            raise ValueError("invalid epochs/bag_k")


@dataclass(frozen=True)
class DistillConfig:
    delta: float = 0.9
    tau: float = 10.0
    alpha: float = 7.5
    proj_hidden: int = 512
    proj_out: int = 128
    epsilon: int = 3  # moving-average width used to refine pseudo-labels
    use_bce: bool = True
    use_minmax: bool = True
    use_moving_average: bool = True

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.epsilon < 1 or self.epsilon % 2 == 0:
            raise ValueError("epsilon must be a positive odd integer")


@dataclass(frozen=True)
class SynthConfig:
    n_train_normal: int = 80
    n_train_anomalous: int = 80
    n_test_normal: int = 30
    n_test_anomalous: int = 30
    frame_range: tuple[int, int] = (480, 1440)
    clip_len: int = 16
    stream_dims: tuple[int, ...] = (64, 64, 32)
    classes: tuple[str, ...] = ("class1", "class2", "class3")
    # stream index -> classes it carries signal for, with a per-stream gain
    visibility: tuple[tuple[str, ...], ...] = (
        ("class1", "class3"),
        ("class2", "class3"),
        ("class1", "class2", "class3"),
    )
    stream_gain: tuple[float, ...] = (1.0, 1.0, 0.75)
    snr: float = 6.0
    background: float = 0.0  # std of an isotropic per-video constant offset
    scene_shift: float = 1.0  # std of a per-video offset along each class direction
    anomaly_fraction: float = 0.073
    student_stream: int = 2
    seed: int = 42

    def __post_init__(self):
        if len(self.visibility) != len(self.stream_dims) or len(self.stream_gain) != len(self.stream_dims):
            raise ValueError("visibility/gain must list one entry per stream")
        seen = {c for vis in self.visibility for c in vis}
        if set(self.classes) - seen:
            raise ValueError(f"classes {set(self.classes) - seen} are visible to no stream")
        if seen - set(self.classes):
            raise ValueError(f"unknown classes in visibility map: {seen - set(self.classes)}")
        if min(self.stream_dims) < len(self.classes):
            raise ValueError("every stream needs at least one dimension per class")
        if not 0.0 < self.anomaly_fraction < 1.0:
            raise ValueError("anomaly_fraction must lie in (0, 1)")
        if self.frame_range[0] < self.clip_len or self.frame_range[1] < self.frame_range[0]:
            raise ValueError("invalid frame range")
        if not 0 <= self.student_stream < len(self.stream_dims):
            raise ValueError("student_stream out of range")
        if min(self.n_train_normal, self.n_train_anomalous, self.n_test_normal, self.n_test_anomalous) < 1:
            raise ValueError("every split needs at least one video per class")


@dataclass(frozen=True)
class RunConfig:
    n_segments: int = 32
    seed: int = 1
    model: ModelConfig = field(default_factory=ModelConfig)
    mil: MilConfig = field(default_factory=MilConfig)
    distill: DistillConfig = field(default_factory=DistillConfig)

    def fingerprint(self) -> str:
        return config_fingerprint(self)


def config_fingerprint(cfg) -> str:
    blob = json.dumps(asdict(cfg), sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def desk_model(stream_dims: tuple[int, ...], **overrides) -> ModelConfig:
    base = dict(stream_dims=tuple(stream_dims), d_model=32, proj_hidden=32, n_heads=4,
                ffn_hidden=64, head_hidden=(32, 16), k=25)
    base.update(overrides)
    return ModelConfig(**base)


def desk_mil(**overrides) -> MilConfig:
    base = dict(epochs=20, lr_temporal=1e-3, lr_other=3e-2)
    base.update(overrides)
    return MilConfig(**base)


def desk_distill(**overrides) -> DistillConfig:
    base = dict(proj_hidden=32, proj_out=16)
    base.update(overrides)
    return DistillConfig(**base)


def from_dict(cls, data: dict):
    """Rebuild a (possibly nested) config dataclass from ``asdict`` output."""
    kwargs = {}
    for f in fields(cls):
        if f.name not in data:
            continue
        v = data[f.name]
        if isinstance(v, dict) and f.name in ("model", "mil", "distill"):
            v = from_dict({"model": ModelConfig, "mil": MilConfig, "distill": DistillConfig}[f.name], v)
        elif isinstance(v, list):
            v = tuple(tuple(x) if isinstance(x, list) else x for x in v)
        kwargs[f.name] = v
    return cls(**kwargs)


def desk_run(seed: int = 1, **overrides) -> RunConfig:
    """RunConfig used by the synthetic end-to-end experiments."""
    base = dict(seed=seed, model=desk_model((64, 64, 32)), mil=desk_mil(), distill=desk_distill())
    base.update(overrides)
    return RunConfig(**base)
