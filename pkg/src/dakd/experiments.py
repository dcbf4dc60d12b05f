"""Seeded synthetic experiments shared by the scripts and the acceptance suite."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

from . import pipeline as P
from .config import RunConfig, SynthConfig, desk_run
from .dataio import SegmentDataset, generate_synthetic, load_dataset

log = logging.getLogger(__name__)

LOSS_ARMS = ("no_nce", "no_bce", "no_minmax", "no_movavg")


@dataclass
class EndToEnd:
    teacher_auc: float
    student_auc: float
    single_stream: dict[str, float]
    student_stream: str
    ablations: dict[str, float] = field(default_factory=dict)  # arm -> student AUC
    no_tam_teacher_auc: float | None = None

    @property
    def mil_student_auc(self) -> float:
        return self.single_stream[self.student_stream]

    def as_dict(self) -> dict:
        return {"teacher_auc": self.teacher_auc, "student_auc": self.student_auc,
                "single_stream": dict(self.single_stream), "ablations": dict(self.ablations),
                "no_tam_teacher_auc": self.no_tam_teacher_auc}


def synthetic_dataset(out_dir, cfg: SynthConfig = SynthConfig(), n_segments: int = 32) -> SegmentDataset:
    out_dir = Path(out_dir)
    manifest = out_dir / "manifest.ini"
    if not manifest.is_file():
        generate_synthetic(cfg, out_dir)
    return load_dataset(manifest, n_segments)


def end_to_end(data: SegmentDataset, cfg: RunConfig | None = None, ablations: bool = True) -> EndToEnd:
    """Teacher, every single-stream MIL baseline, distilled student and ablation arms on one seed."""
    cfg = cfg or desk_run()
    train, test = data.split("train"), data.split("test")
    teacher, _ = P.fit_teacher(train, cfg)
    teacher_auc = P.evaluate_model(teacher, test).auc
    log.info("teacher AUC %.4f", teacher_auc)
    singles = {}
    for s in data.stream_names:
        model, _ = P.fit_single_stream(train, s, cfg)
        singles[s] = P.evaluate_model(model, test, [s]).auc
        log.info("single-stream %s AUC %.4f", s, singles[s])
    full = P.run_pipeline(data, cfg, teacher=teacher)
    result = EndToEnd(teacher_auc, full.student_report.auc, singles, data.student_stream)
    log.info("student AUC %.4f", result.student_auc)
    if ablations:
        for arm in LOSS_ARMS:
            r = P.run_pipeline(data, P.ablation_config(cfg, arm), teacher=teacher)
            result.ablations[arm] = r.student_report.auc
        r = P.run_pipeline(data, P.ablation_config(cfg, "no_tam"))
        result.ablations["no_tam"] = r.student_report.auc
        result.no_tam_teacher_auc = r.teacher_report.auc
        log.info("ablations %s", result.ablations)
    return result
