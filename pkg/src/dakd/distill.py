"""Stage two: prediction- and feature-level distillation into the student.

The student regresses the refined pseudo-labels with BCE and aligns its
projected representations with the frozen teacher's through a two-sided
InfoNCE loss whose classes come from thresholding the teacher's scores.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .config import DistillConfig, MilConfig
from .dataio import SegmentDataset
from .miltrain import OptimizerState, adagrad_step, balanced_batches, lr_schedule
from .models import Model, forward, glorot_bound
from .refinery import PseudoLabelStore

log = logging.getLogger(__name__)

BCE_CLAMP = 1e-7


@dataclass
class FeaturePartition:
    """Index-aligned teacher/student representations split by a teacher mask."""

    teacher: object  # (N, d) representations h_i
    student: object
    anomalous: np.ndarray  # bool (N,)

    @property
    def anomaly_idx(self) -> np.ndarray:
        return np.flatnonzero(self.anomalous)

    @property
    def normal_idx(self) -> np.ndarray:
        return np.flatnonzero(~self.anomalous)


def partition_features(teacher_scores, teacher_h, student_h, delta: float) -> FeaturePartition:
    """Flatten ``(..., n_s)`` scores and ``(..., n_s, d)`` features; anomalous iff score >= delta."""
    scores = np.asarray(dc.as_tensor(teacher_scores).data).reshape(-1)
    th, sh = dc.as_tensor(teacher_h), dc.as_tensor(student_h)
    if th.shape[:-1] != sh.shape[:-1] or int(np.prod(th.shape[:-1])) != scores.size:
        raise dc.ShapeError(f"misaligned inputs: scores {scores.size}, teacher {th.shape}, student {sh.shape}")
    th = dc.reshape(th, (scores.size, th.shape[-1]))
    sh = dc.reshape(sh, (scores.size, sh.shape[-1]))
    return FeaturePartition(th, sh, scores >= delta)


def head_shapes(d_in: int, hidden: int, out: int, prefix: str) -> dict[str, tuple[int, int]]:
    return {f"{prefix}.w1": (d_in, hidden), f"{prefix}.w2": (hidden, out)}


def init_heads(d_teacher: int, d_student: int, cfg: DistillConfig, seed: int) -> dict[str, np.ndarray]:
    """Separate single-hidden-layer projection heads for teacher and student features."""
    rng = np.random.default_rng(seed)
    shapes = {**head_shapes(d_teacher, cfg.proj_hidden, cfg.proj_out, "ph_t"),
              **head_shapes(d_student, cfg.proj_hidden, cfg.proj_out, "ph_s")}
    return {k: rng.uniform(-glorot_bound(*s), glorot_bound(*s), size=s) for k, s in shapes.items()}


def project(h, heads, prefix: str) -> dc.Tensor:
    return dc.relu(dc.as_tensor(h) @ heads[f"{prefix}.w1"]) @ heads[f"{prefix}.w2"]


def _unit(z: dc.Tensor) -> dc.Tensor:
    sq = dc.sum(z * z, axis=-1, keepdims=True)
    if np.any(sq.data == 0):
        raise ValueError("zero-norm projection vector; cosine similarity undefined")
    return z / dc.sqrt(sq)


def _one_side(zt, zs, anchors, negatives, tau):
    if len(anchors) == 0:
        return None
    za_t = zt[anchors]
    pos = dc.scale(dc.sum(za_t * zs[anchors], axis=-1), 1.0 / tau)
    logits = dc.reshape(pos, (len(anchors), 1))
    if len(negatives):
        neg = dc.scale(za_t @ dc.transpose(zs[negatives]), 1.0 / tau)
        logits = dc.concat([logits, neg], axis=1)
    return dc.mean(dc.logsumexp(logits, axis=-1) - pos)


def info_nce_from_projections(zt, zs, anomalous: np.ndarray, tau: float) -> dc.Tensor:
    """Two-sided InfoNCE on projected features (rows index-aligned).

    Anomaly anchors take the student's normal projections as negatives and
    vice versa; each side is averaged over its anchors and the two sides
    are summed.  An empty class contributes nothing.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    zt, zs = _unit(dc.as_tensor(zt)), _unit(dc.as_tensor(zs))
    a_idx, n_idx = np.flatnonzero(anomalous), np.flatnonzero(~np.asarray(anomalous))
    sides = [s for s in (_one_side(zt, zs, a_idx, n_idx, tau), _one_side(zt, zs, n_idx, a_idx, tau))
             if s is not None]
    total = sides[0]
    for s in sides[1:]:
        total = total + s
    return total


def info_nce_loss(partition: FeaturePartition, heads, tau: float) -> dc.Tensor:
    zt = project(partition.teacher, heads, "ph_t")
    zs = project(partition.student, heads, "ph_s")
    return info_nce_from_projections(zt, zs, partition.anomalous, tau)


def bce_loss(pseudo_labels, student_scores) -> dc.Tensor:
    """Mean binary cross-entropy with predictions clamped to ``[1e-7, 1 - 1e-7]``."""
    y = np.asarray(pseudo_labels, dtype=np.float64)
    p = dc.as_tensor(student_scores)
    if y.shape != p.shape:
        raise dc.ShapeError(f"labels {y.shape} vs predictions {p.shape}")
    p = dc.clip(p, BCE_CLAMP, 1.0 - BCE_CLAMP)
    ll = y * dc.log(p) + (1.0 - y) * dc.log(1.0 - p)
    return dc.scale(dc.mean(ll), -1.0)


def distill_loss(bce, nce, alpha: float, tau: float):
    """``bce + alpha * tau**2 * nce`` (works on floats or tensors)."""
    w = alpha * tau * tau
    if isinstance(nce, dc.Tensor) or isinstance(bce, dc.Tensor):
        return dc.add(bce, dc.scale(nce, w))
    return bce + w * nce


def student_loss(student: Model, params, stream, teacher_scores, teacher_h, pseudo, cfg: DistillConfig):
    """Return ``(L_d, L_bce, L_nce)`` tensors for one batch."""
    scores, h = forward(student.config, params, [stream])
    bce = bce_loss(pseudo, scores) if cfg.use_bce else dc.Tensor(0.0)
    if cfg.alpha > 0:
        part = partition_features(teacher_scores, teacher_h, h, cfg.delta)
        nce = info_nce_loss(part, params, cfg.tau)
    else:
        nce = dc.Tensor(0.0)
    return distill_loss(bce, nce, cfg.alpha, cfg.tau), bce, nce


def train_student(data: SegmentDataset, teacher: Model, student: Model, pseudo: PseudoLabelStore,
                  cfg: DistillConfig, opt: MilConfig, seed: int, on_epoch=None):
    """Distill a frozen ``teacher`` into ``student`` (in place).

    ``data`` must carry every teacher stream; the student reads the
    manifest's designated stream.  Returns ``(student, heads, history)``
    where history rows are ``(bce, nce, total)`` epoch means.
    """
    if not cfg.use_bce and cfg.alpha == 0:
        raise ValueError("both distillation terms are disabled")
    if pseudo is None:
        raise ValueError("pseudo-labels are required for distillation")
    if data.student_stream not in data.stream_names:
        raise KeyError(f"student stream {data.student_stream!r} absent from dataset")
    labels = pseudo.for_ids(data.ids)
    s_stream = data.streams[data.stream_names.index(data.student_stream)]
    t_scores, t_h = teacher(data.streams)
    t_scores, t_h = t_scores.data, t_h.data

    heads = init_heads(teacher.config.d_model, student.config.d_model, cfg, seed + 7919)
    params = {**student.params, **heads}
    trainable = [*student.trainable(), *heads]
    rng = np.random.default_rng(seed)
    state = OptimizerState(eps=opt.eps_opt)
    lr = lr_schedule(opt)

    def fn(p, inputs):
        total, bce, nce = student_loss(student, p, inputs["x"], inputs["ts"], inputs["th"], inputs["y"], cfg)
        return {"total": total, "bce": bce, "nce": nce}

    graph = dc.Graph(fn, params)
    history = []
    for epoch in range(opt.epochs):
        rows = []
        for a_idx, n_idx in balanced_batches(data.labels, opt.n_normal, opt.n_anomalous, rng):
            idx = np.concatenate([a_idx, n_idx])
            out = graph.forward(x=s_stream[idx], ts=t_scores[idx], th=t_h[idx], y=labels[idx])
            grads = graph.backward(output="total")
            adagrad_step(params, {k: grads[k] for k in trainable}, state, lr, opt.weight_decay)
            rows.append((float(out["bce"]), float(out["nce"]), float(out["total"])))
        history.append(tuple(float(x) for x in np.mean(rows, axis=0)))
        log.debug("distill epoch %d bce %.5f nce %.5f total %.5f", epoch, *history[-1])
        if on_epoch:
            on_epoch(epoch, history[-1])
    return student, heads, history
