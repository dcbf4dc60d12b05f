"""Command line: synth, train-teacher, refine, distill, eval, ablate.

Every command writes into one run directory (``--out`` or ``$DAKD_OUT_DIR``)
and records what it produced in ``outputs.json`` there.  Exit codes: 0 ok,
2 usage, 3 data error, 4 non-finite numerics.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import pipeline as P
from .config import DistillConfig, MilConfig, ModelConfig, RunConfig, SynthConfig, desk_run
from .dataio import (CheckpointError, FeatureFormatError, ManifestError, anomalous_fraction, generate_synthetic,
                     load_dataset, read_manifest)
from .diffcore import NonFiniteError
from .evalmetrics import evaluate, frame_series
from .refinery import read_pseudo_labels, write_pseudo_labels

log = logging.getLogger("dakd")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
DATA_ERRORS = (ManifestError, FeatureFormatError, CheckpointError, FileNotFoundError, KeyError)


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- helpers

def run_dir(args) -> Path:
    out = Path(args.out or os.environ.get("DAKD_OUT_DIR") or "runs/latest")
    out.mkdir(parents=True, exist_ok=True)
    return out


def record_outputs(out: Path, command: str, files: list[Path]) -> None:
    index = out / "outputs.json"
    data = json.loads(index.read_text()) if index.is_file() else {}
    data[command] = sorted(str(Path(f).relative_to(out)) if Path(f).is_relative_to(out) else str(f)
                           for f in files)
    index.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def write_csv(path: Path, fingerprint: str, header: list[str], rows) -> Path:
    with open(path, "w", newline="") as fh:
        fh.write(f"# config {fingerprint}\n")
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
    return path


# flag name -> (config section, field)
MODEL_FLAGS = ("d_model", "proj_hidden", "n_heads", "ffn_hidden", "k")
MIL_FLAGS = ("lambda_smooth", "lambda_sparse", "epochs", "n_normal", "n_anomalous", "lr_temporal", "lr_other",
             "weight_decay", "bag_k")
DISTILL_FLAGS = ("delta", "tau", "alpha", "epsilon")


def add_run_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("run configuration (defaults: published setup, or --desk)")
    g.add_argument("--desk", action="store_true", help="reduced widths/rates for synthetic runs")
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--n-segments", type=int, default=None)
    kinds = {f.name: f.type for cls in (ModelConfig, MilConfig, DistillConfig) for f in fields(cls)}
    for name in (*MODEL_FLAGS, *MIL_FLAGS, *DISTILL_FLAGS):
        typ = int if kinds[name] in (int, "int") else float
        g.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None)


def run_config(args, base: RunConfig | None = None) -> RunConfig:
    cfg = base or (desk_run() if args.desk else RunConfig())
    pick = lambda names: {n: getattr(args, n) for n in names if getattr(args, n, None) is not None}  # noqa: E731
    try:
        cfg = replace(cfg, model=replace(cfg.model, **pick(MODEL_FLAGS)), mil=replace(cfg.mil, **pick(MIL_FLAGS)),
                      distill=replace(cfg.distill, **pick(DISTILL_FLAGS)))
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.n_segments is not None:
            cfg = replace(cfg, n_segments=args.n_segments)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return cfg


def dataset(args, cfg: RunConfig):
    return load_dataset(args.data, cfg.n_segments)


# --------------------------------------------------------------- commands

def cmd_synth(args) -> int:
    out = run_dir(args)
    overrides = {k: getattr(args, k) for k in ("seed", "snr", "scene_shift", "n_train_normal", "n_train_anomalous",
                                               "n_test_normal", "n_test_anomalous", "anomaly_fraction")
                 if getattr(args, k) is not None}
    try:
        cfg = SynthConfig(**overrides)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    target = out / "data"
    manifest = generate_synthetic(cfg, target)
    frac = anomalous_fraction(read_manifest(manifest))
    print(f"wrote {manifest} (anomalous frame fraction {frac:.4f})")
    record_outputs(out, "synth", [manifest, target / "features"])
    return EXIT_OK


def cmd_train_teacher(args) -> int:
    out = run_dir(args)
    cfg = run_config(args)
    train = dataset(args, cfg).split("train")
    teacher, history = P.fit_teacher(train, cfg)
    ckpt = out / "teacher.ckpt"
    P.save_model(ckpt, teacher, cfg)
    loss_csv = write_csv(out / "teacher_loss.csv", cfg.fingerprint(), ["epoch", "meanLoss"], enumerate(history))
    print(f"teacher trained for {len(history)} epochs; final loss {history[-1] if history else float('nan'):.6f}")
    record_outputs(out, "train-teacher", [ckpt, loss_csv])
    return EXIT_OK


def cmd_refine(args) -> int:
    out = run_dir(args)
    teacher = P.load_model(args.teacher)
    cfg = run_config(args, P.load_run_config(args.teacher))
    train = dataset(args, cfg).split("train")
    store = P.refine_labels(teacher, train, cfg)
    path = out / "pseudo_labels.csv"
    write_pseudo_labels(store, path, cfg.fingerprint())
    print(f"pseudo-labels for {len(store.ids)} videos (epsilon={cfg.distill.epsilon})")
    record_outputs(out, "refine", [path])
    return EXIT_OK


def cmd_distill(args) -> int:
    out = run_dir(args)
    teacher = P.load_model(args.teacher)
    cfg = run_config(args, P.load_run_config(args.teacher))
    train = dataset(args, cfg).split("train")
    pseudo = read_pseudo_labels(args.pseudo)
    student, history = P.fit_student(train, teacher, pseudo, cfg)
    ckpt = out / "student.ckpt"
    P.save_model(ckpt, student, cfg)
    hist = write_csv(out / "student_history.csv", cfg.fingerprint(), ["epoch", "bce", "nce", "total"],
                     ((e, *row) for e, row in enumerate(history)))
    record_outputs(out, "distill", [ckpt, hist])
    print(f"student distilled for {len(history)} epochs")
    return EXIT_OK


def cmd_eval(args) -> int:
    out = run_dir(args)
    model = P.load_model(args.model)
    cfg = P.load_run_config(args.model) or RunConfig()
    data = load_dataset(args.data, cfg.n_segments).split(args.split)
    streams = [data.student_stream] if isinstance(model, P.StudentModel) else None
    seg = P.model_scores(model, data, streams)
    report = evaluate(data, seg)
    fp = cfg.fingerprint()
    metrics = write_csv(out / "metrics.csv", fp, ["metric", "subset", "value"], report.rows())
    series = frame_series(data, seg)
    rows = ((vid, f, s[f], y[f]) for vid, s, y in zip(series.video_ids, series.scores, series.labels)
            for f in range(len(s)))
    frames = write_csv(out / "frame_scores.csv", fp, ["videoId", "frame", "score", "label"], rows)
    print(report.summary())
    record_outputs(out, "eval", [metrics, frames])
    return EXIT_OK


def derived_seed(seed: int, trial: int) -> int:
    return int(np.random.SeedSequence([seed, trial]).generate_state(1)[0])


def _trial(job):
    """One ablation trial; top level so worker processes can import it."""
    manifest, cfg, base, teacher_path = job
    data = load_dataset(manifest, cfg.n_segments)
    teacher = None
    if teacher_path and not P.needs_new_teacher(base, cfg):
        teacher = P.load_model(teacher_path)
    result = P.run_pipeline(data, cfg, teacher)
    return result.teacher_report.auc, result.student_report.auc, result.student_report.ap


def cmd_ablate(args) -> int:
    out = run_dir(args)
    base = run_config(args)
    if bool(args.param) == bool(args.arms):
        raise UsageError("give either --param/--values or --arms")
    if args.param:
        if not args.values:
            raise UsageError("--param needs --values")
        labels = [v.strip() for v in args.values.split(",") if v.strip()]
        try:
            variants = [P.sweep_config(base, args.param, v) for v in labels]
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        key = args.param
    else:
        labels = [a.strip() for a in args.arms.split(",") if a.strip()]
        try:
            variants = [P.ablation_config(base, a) for a in labels]
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        key = "arm"
    if not args.shared_seed:
        variants = [replace(v, seed=derived_seed(base.seed, i)) for i, v in enumerate(variants)]

    # a teacher depends only on model/optimiser/seed, so trials that keep those share one
    teacher_path = None
    if any(not P.needs_new_teacher(base, v) for v in variants):
        data = load_dataset(args.data, base.n_segments)
        teacher, _ = P.fit_teacher(data.split("train"), base)
        teacher_path = out / "ablate_teacher.ckpt"
        P.save_model(teacher_path, teacher, base)
    jobs = [(args.data, v, base, teacher_path) for v in variants]
    workers = args.workers or int(os.environ.get("DAKD_WORKERS", "1"))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_trial, jobs))
    else:
        results = [_trial(j) for j in jobs]

    rows = [(lab, v.seed, *r) for lab, v, r in zip(labels, variants, results)]
    table = write_csv(out / "ablation.csv", base.fingerprint(),
                      [key, "seed", "teacherAuc", "studentAuc", "studentAp"], rows)
    for lab, seed, t_auc, s_auc, s_ap in rows:
        print(f"{key}={lab:<16} teacher AUC={t_auc:.4f} student AUC={s_auc:.4f} AP={s_ap:.4f}")
    produced = [table] + ([teacher_path] if teacher_path else [])
    record_outputs(out, "ablate", produced)
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dakd", description="multi-stream anomaly teacher -> single-stream student")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data=True):
        sp.add_argument("--out", default=None, help="run directory (default $DAKD_OUT_DIR or runs/latest)")
        if data:
            sp.add_argument("--data", required=True, help="dataset manifest")

    s = sub.add_parser("synth", help="generate a synthetic multi-stream dataset")
    common(s, data=False)
    s.add_argument("--seed", type=int)
    s.add_argument("--snr", type=float)
    s.add_argument("--scene-shift", type=float)
    s.add_argument("--anomaly-fraction", type=float)
    for split in ("train", "test"):
        for cls in ("normal", "anomalous"):
            s.add_argument(f"--n-{split}-{cls}", type=int)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train-teacher", help="MIL-train the multi-stream teacher")
    common(s)
    add_run_flags(s)
    s.set_defaults(func=cmd_train_teacher)

    s = sub.add_parser("refine", help="turn teacher scores into pseudo-labels")
    common(s)
    s.add_argument("--teacher", required=True)
    add_run_flags(s)
    s.set_defaults(func=cmd_refine)

    s = sub.add_parser("distill", help="distill the teacher into the single-stream student")
    common(s)
    s.add_argument("--teacher", required=True)
    s.add_argument("--pseudo", required=True)
    add_run_flags(s)
    s.set_defaults(func=cmd_distill)

    s = sub.add_parser("eval", help="frame-level AUC/AP, per-class AUC and frame scores")
    common(s)
    s.add_argument("--model", required=True)
    s.add_argument("--split", default="test", choices=["train", "test"])
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("ablate", help="sweep a hyperparameter or toggle components")
    common(s)
    s.add_argument("--param", choices=sorted(P.SWEEP_PARAMS))
    s.add_argument("--values", help="comma-separated values for --param")
    s.add_argument("--arms", help=f"comma-separated arms from {P.ABLATION_COMPONENTS} or mask:self+c2p...")
    s.add_argument("--workers", type=int, default=None, help="parallel trials (default $DAKD_WORKERS or 1)")
    s.add_argument("--shared-seed", action="store_true", help="run every trial on the base seed")
    add_run_flags(s)
    s.set_defaults(func=cmd_ablate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"dakd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NonFiniteError as exc:
        print(f"dakd: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DATA_ERRORS as exc:
        print(f"dakd: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
