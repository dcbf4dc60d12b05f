"""Stage one: MIL ranking training of segment scorers with Adagrad."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from . import diffcore as dc
from .config import MilConfig
from .dataio import SegmentDataset
from .models import Model, forward

log = logging.getLogger(__name__)


def bag_score(scores, k: int = 1) -> dc.Tensor:
    """Mean of the top-``k`` segment scores along the last axis (k=1 is max)."""
    scores = dc.as_tensor(scores)
    if k == 1:
        return dc.max(scores, axis=-1)
    k = min(k, scores.shape[-1])
    top = np.argsort(-scores.data, axis=-1, kind="stable")[..., :k]
    lead = np.indices(top.shape[:-1])
    picked = scores[(*[ix[..., None] for ix in lead], top)]
    return dc.mean(picked, axis=-1)


def mil_ranking_loss(anom, norm, cfg: MilConfig = MilConfig()) -> dc.Tensor:
    """Hinge ranking between bags plus smoothness and sparsity on the anomalous bag.

    ``anom`` and ``norm`` have shape ``(..., n_s)``; leading axes index pairs
    and the result is the mean over pairs.
    """
    anom, norm = dc.as_tensor(anom), dc.as_tensor(norm)
    if anom.shape != norm.shape:
        raise dc.ShapeError(f"score sequences differ in shape: {anom.shape} vs {norm.shape}")
    hinge = dc.relu(1.0 - bag_score(anom, cfg.bag_k) + bag_score(norm, cfg.bag_k))
    diffs = anom[..., :-1] - anom[..., 1:]
    smooth = dc.sum(diffs * diffs, axis=-1)
    sparse = dc.sum(anom, axis=-1)
    per_pair = hinge + dc.scale(smooth, cfg.lambda_smooth) + dc.scale(sparse, cfg.lambda_sparse)
    return dc.mean(per_pair)


@dataclass
class OptimizerState:
    accum: dict[str, np.ndarray] = field(default_factory=dict)
    eps: float = 1e-10


def adagrad_step(params: dict[str, np.ndarray], grads: Mapping[str, np.ndarray], state: OptimizerState,
                 lr: float | Callable[[str], float], weight_decay: float = 0.0):
    """In-place Adagrad update with L2 weight decay folded into the gradient."""
    lr_of = lr if callable(lr) else (lambda _name: lr)
    for name, g in grads.items():
        theta = params[name]
        if g.shape != theta.shape:
            raise dc.ShapeError(f"{name}: gradient {g.shape} vs parameter {theta.shape}")
        g = g + weight_decay * theta
        acc = state.accum.get(name)
        if acc is None:
            acc = np.zeros_like(theta)
        acc = acc + g * g
        state.accum[name] = acc
        theta -= lr_of(name) * g / (np.sqrt(acc) + state.eps)
    return params, state


def lr_schedule(cfg: MilConfig) -> Callable[[str], float]:
    return lambda name: cfg.lr_temporal if name.startswith("tam.") else cfg.lr_other


def balanced_batches(labels: np.ndarray, n_normal: int, n_anomalous: int, rng: np.random.Generator):
    """Yield ``(anomalous_idx, normal_idx)`` pairs covering one epoch.

    Both classes are shuffled and consumed without replacement; a step pairs
    ``min`` of the two slice lengths, so surplus videos of the larger class
    sit out that epoch.
    """
    anom = rng.permutation(np.flatnonzero(labels == 1))
    norm = rng.permutation(np.flatnonzero(labels == 0))
    n_steps = int(np.ceil(min(len(anom) / n_anomalous, len(norm) / n_normal)))
    for s in range(n_steps):
        a = anom[s * n_anomalous:(s + 1) * n_anomalous]
        n = norm[s * n_normal:(s + 1) * n_normal]
        m = min(len(a), len(n))
        if m:
            yield a[:m], n[:m]


def train_mil(model: Model, data: SegmentDataset, cfg: MilConfig, seed: int,
              on_epoch: Callable[[int, float], None] | None = None):
    """Train ``model`` in place on the streams of ``data``; return ``(model, history)``."""
    if len(set(data.labels.tolist())) < 2:
        raise ValueError("MIL training needs both normal and anomalous videos")
    if data.stream_dims != model.config.stream_dims:
        raise dc.ShapeError(f"data streams {data.stream_dims} vs model {model.config.stream_dims}")
    rng = np.random.default_rng(seed)
    state = OptimizerState(eps=cfg.eps_opt)
    lr = lr_schedule(cfg)
    trainable = model.trainable()

    def loss_fn(params, inputs):
        scores, _ = forward(model.config, params, inputs["streams"])
        m = inputs["m"]
        return mil_ranking_loss(scores[:m], scores[m:], cfg)

    graph = dc.Graph(loss_fn, model.params)
    history = []
    for epoch in range(cfg.epochs):
        losses = []
        for a_idx, n_idx in balanced_batches(data.labels, cfg.n_normal, cfg.n_anomalous, rng):
            idx = np.concatenate([a_idx, n_idx])
            loss = graph.forward(streams=[s[idx] for s in data.streams], m=len(a_idx))
            grads = graph.backward()
            adagrad_step(model.params, {k: grads[k] for k in trainable}, state, lr, cfg.weight_decay)
            losses.append(float(loss))
        history.append(float(np.mean(losses)))
        log.debug("mil epoch %d loss %.5f", epoch, history[-1])
        if on_epoch:
            on_epoch(epoch, history[-1])
    return model, history


def train_teacher(data: SegmentDataset, teacher: Model, cfg: MilConfig, seed: int, **kw):
    return train_mil(teacher, data, cfg, seed, **kw)
