"""End-to-end experiment plumbing: teacher -> pseudo-labels -> student -> metrics."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .config import COMPONENTS, DistillConfig, MilConfig, ModelConfig, RunConfig, from_dict
from .dataio import SegmentDataset, load_checkpoint, save_checkpoint
from .distill import train_student
from .evalmetrics import MetricReport, evaluate
from .miltrain import train_mil
from .models import Model, StudentModel, TeacherModel, param_shapes
from .refinery import PseudoLabelStore, build_pseudo_labels

log = logging.getLogger(__name__)

# seed offsets keep the stages' random streams independent of each other
TEACHER_SEED, STUDENT_SEED, BASELINE_SEED = 0, 1000, 2000


def teacher_config(cfg: RunConfig, data: SegmentDataset) -> ModelConfig:
    return replace(cfg.model, stream_dims=data.stream_dims)


def student_config(cfg: RunConfig, data: SegmentDataset) -> ModelConfig:
    width = data.stream_dims[data.stream_names.index(data.student_stream)]
    return cfg.model.single_stream(width)


def fit_teacher(train: SegmentDataset, cfg: RunConfig) -> tuple[TeacherModel, list[float]]:
    teacher = TeacherModel.create(teacher_config(cfg, train), cfg.seed + TEACHER_SEED)
    return train_mil(teacher, train, cfg.mil, cfg.seed + TEACHER_SEED)


def fit_single_stream(train: SegmentDataset, stream: str, cfg: RunConfig) -> tuple[StudentModel, list[float]]:
    """MIL-only single-stream baseline (student architecture, no distillation)."""
    view = train.select_streams(stream)
    model = StudentModel.create(cfg.model.single_stream(view.stream_dims[0]), cfg.seed + BASELINE_SEED)
    return train_mil(model, view, cfg.mil, cfg.seed + BASELINE_SEED)


def refine_labels(teacher: Model, train: SegmentDataset, cfg: RunConfig) -> PseudoLabelStore:
    d = cfg.distill
    return build_pseudo_labels(teacher, train, d.epsilon, d.use_moving_average, d.use_minmax)


def fit_student(train: SegmentDataset, teacher: Model, pseudo: PseudoLabelStore, cfg: RunConfig):
    student = StudentModel.create(student_config(cfg, train), cfg.seed + STUDENT_SEED)
    student, _heads, history = train_student(train, teacher, student, pseudo, cfg.distill, cfg.mil,
                                             cfg.seed + STUDENT_SEED)
    return student, history


def model_scores(model: Model, data: SegmentDataset, streams: list[str] | None = None) -> np.ndarray:
    view = data if streams is None else data.select_streams(streams)
    return model.scores(view.streams)


def evaluate_model(model: Model, test: SegmentDataset, streams: list[str] | None = None) -> MetricReport:
    return evaluate(test, model_scores(model, test, streams))


@dataclass
class PipelineResult:
    teacher: TeacherModel
    student: StudentModel
    pseudo: PseudoLabelStore
    teacher_report: MetricReport
    student_report: MetricReport
    teacher_history: list = field(default_factory=list)
    student_history: list = field(default_factory=list)


def run_pipeline(data: SegmentDataset, cfg: RunConfig, teacher: TeacherModel | None = None) -> PipelineResult:
    train, test = data.split("train"), data.split("test")
    t_hist = []
    if teacher is None:
        teacher, t_hist = fit_teacher(train, cfg)
    pseudo = refine_labels(teacher, train, cfg)
    student, s_hist = fit_student(train, teacher, pseudo, cfg)
    return PipelineResult(
        teacher, student, pseudo,
        evaluate_model(teacher, test),
        evaluate_model(student, test, [test.student_stream]),
        t_hist, s_hist,
    )


# ------------------------------------------------------------------ ablation

ABLATION_COMPONENTS = ("full", "no_tam", "no_nce", "no_bce", "no_minmax", "no_movavg")
SWEEP_PARAMS = {"alpha": float, "tau": float, "delta": float, "epsilon": int, "k": int}


def ablation_config(cfg: RunConfig, arm: str) -> RunConfig:
    """RunConfig for a named ablation arm.

    ``mask:self+c2p`` style arms restrict the attention logit terms.
    """
    if arm == "full":
        return cfg
    if arm == "no_tam":
        return replace(cfg, model=replace(cfg.model, use_tam=False))
    if arm == "no_nce":
        return replace(cfg, distill=replace(cfg.distill, alpha=0.0))
    if arm == "no_bce":
        return replace(cfg, distill=replace(cfg.distill, use_bce=False))
    if arm == "no_minmax":
        return replace(cfg, distill=replace(cfg.distill, use_minmax=False))
    if arm == "no_movavg":
        return replace(cfg, distill=replace(cfg.distill, use_moving_average=False))
    if arm.startswith("mask:"):
        comps = tuple(c for c in arm[5:].split("+") if c)
        if not comps or set(comps) - set(COMPONENTS):
            raise ValueError(f"bad attention mask {arm!r}; use components from {COMPONENTS}")
        return replace(cfg, model=replace(cfg.model, components=comps))
    raise ValueError(f"unknown ablation arm {arm!r}")


def sweep_config(cfg: RunConfig, param: str, value) -> RunConfig:
    if param not in SWEEP_PARAMS:
        raise ValueError(f"cannot sweep {param!r}; choose from {sorted(SWEEP_PARAMS)}")
    value = SWEEP_PARAMS[param](value)
    if param == "k":
        return replace(cfg, model=replace(cfg.model, k=value))
    return replace(cfg, distill=replace(cfg.distill, **{param: value}))


def needs_new_teacher(base: RunConfig, variant: RunConfig) -> bool:
    return base.model != variant.model or base.mil != variant.mil or base.seed != variant.seed


# ------------------------------------------------------------- checkpoints

def save_model(path, model: Model, run_cfg: RunConfig | None = None, extra: dict | None = None) -> None:
    kind = "student" if isinstance(model, StudentModel) else "teacher"
    meta = dict(extra or {})
    if run_cfg is not None:
        meta["run"] = asdict(run_cfg)
    save_checkpoint(path, model.params, asdict(model.config), kind, meta)


def load_model(path) -> Model:
    params, config, kind, _extra = load_checkpoint(path)
    mcfg = from_dict(ModelConfig, config)
    load_checkpoint(path, expect=set(param_shapes(mcfg)))
    cls = StudentModel if kind == "student" else TeacherModel
    return cls(mcfg, params)


def load_run_config(path) -> RunConfig | None:
    _p, _c, _k, extra = load_checkpoint(path)
    return from_dict(RunConfig, extra["run"]) if "run" in extra else None


__all__ = [
    "DistillConfig", "MilConfig", "PipelineResult", "RunConfig", "ablation_config", "evaluate_model",
    "fit_single_stream", "fit_student", "fit_teacher", "load_model", "refine_labels", "run_pipeline",
    "save_model", "sweep_config",
]
