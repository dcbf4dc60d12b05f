"""Teacher (multi-stream) and student (single-stream) anomaly scorers.

Both share one layout: per-stream projection MLPs to a common width, the
temporal aggregation block (attention + residual feed-forward), and a
sigmoid scoring head applied per segment.  Parameters live in a flat
``name -> float64 array`` dict so optimisers and checkpoints stay trivial.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import diffcore as dc
from .config import ModelConfig
from .relattn import AttentionParams, ablate_components


def glorot_bound(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    d = cfg.d_model
    shapes: dict[str, tuple[int, ...]] = {}
    for t, dt in enumerate(cfg.stream_dims):
        shapes[f"proj.{t}.w1"] = (dt, cfg.proj_hidden)
        shapes[f"proj.{t}.b1"] = (cfg.proj_hidden,)
        shapes[f"proj.{t}.w2"] = (cfg.proj_hidden, d)
        shapes[f"proj.{t}.b2"] = (d,)
    if cfg.use_tam:
        for t in range(cfg.n_streams):
            for kind in ("wq", "wk", "wv"):
                shapes[f"tam.{kind}.{t}"] = (d, d)
        shapes["tam.wq_r"] = (d, d)
        shapes["tam.wk_r"] = (d, d)
        shapes["tam.rel"] = (2 * cfg.k, d)
    shapes["tam.ffn.w1"] = (d, cfg.ffn_hidden)
    shapes["tam.ffn.b1"] = (cfg.ffn_hidden,)
    shapes["tam.ffn.w2"] = (cfg.ffn_hidden, d)
    shapes["tam.ffn.b2"] = (d,)
    widths = (d, *cfg.head_hidden, 1)
    for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
        shapes[f"head.w{i}"] = (a, b)
        shapes[f"head.b{i}"] = (b,)
    return shapes


def init_params(cfg: ModelConfig, seed: int) -> dict[str, np.ndarray]:
    """Glorot-uniform matrices, zero biases; deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(cfg).items():
        if len(shape) == 1:
            params[name] = np.zeros(shape)
        else:
            bound = glorot_bound(*shape)
            params[name] = rng.uniform(-bound, bound, size=shape)
    return params


def mlp(x, layers: Sequence[tuple], final_activation=None):
    """Dense stack with ReLU between layers."""
    for i, (w, b) in enumerate(layers):
        x = x @ w + b
        if i < len(layers) - 1:
            x = dc.relu(x)
    return final_activation(x) if final_activation else x


def forward(cfg: ModelConfig, params: Mapping, streams: Sequence):
    """Return ``(scores, H)`` for inputs of shape ``(..., n_s, d_t)``.

    ``scores`` has shape ``(..., n_s)``; ``H`` is the aggregated
    representation fed to the scoring head, ``(..., n_s, d_model)``.
    """
    if len(streams) != cfg.n_streams:
        raise dc.ShapeError(f"model expects {cfg.n_streams} streams, got {len(streams)}")
    streams = [dc.as_tensor(z) for z in streams]
    lead = streams[0].shape[:-1]
    for t, (z, dt) in enumerate(zip(streams, cfg.stream_dims)):
        if z.shape[-1] != dt:
            raise dc.ShapeError(f"stream {t} has width {z.shape[-1]}, expected {dt}")
        if z.shape[:-1] != lead:
            raise dc.ShapeError(f"stream {t} has {z.shape[:-1]} segments, expected {lead}")

    projected = [
        mlp(z, [(params[f"proj.{t}.w1"], params[f"proj.{t}.b1"]),
                (params[f"proj.{t}.w2"], params[f"proj.{t}.b2"])])
        for t, z in enumerate(streams)
    ]
    x = projected[0]
    for z in projected[1:]:
        x = x + z
    x = dc.scale(x, 1.0 / len(projected))
    if cfg.use_tam:
        attn = AttentionParams.from_flat(params, cfg.n_streams, cfg.n_heads)
        x = x + ablate_components(projected, attn, cfg.active_components()).H
    x = x + mlp(x, [(params["tam.ffn.w1"], params["tam.ffn.b1"]),
                    (params["tam.ffn.w2"], params["tam.ffn.b2"])])
    n_head = len(cfg.head_hidden) + 1
    logits = mlp(x, [(params[f"head.w{i}"], params[f"head.b{i}"]) for i in range(n_head)])
    scores = dc.sigmoid(dc.reshape(logits, logits.shape[:-1]))
    return scores, x


@dataclass
class Model:
    config: ModelConfig
    params: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def create(cls, config: ModelConfig, seed: int):
        return cls(config, init_params(config, seed))

    def __post_init__(self):
        expected = param_shapes(self.config)
        if self.params:
            missing = set(expected) - set(self.params)
            if missing:
                raise KeyError(f"missing parameters: {sorted(missing)}")
            for k, shape in expected.items():
                if self.params[k].shape != shape:
                    raise dc.ShapeError(f"{k}: shape {self.params[k].shape} != {shape}")

    def __call__(self, streams: Sequence):
        return forward(self.config, self.params, streams)

    def scores(self, streams: Sequence) -> np.ndarray:
        return forward(self.config, self.params, streams)[0].data

    def copy(self):
        return type(self)(self.config, {k: v.copy() for k, v in self.params.items()})

    def trainable(self) -> list[str]:
        names = list(self.params)
        if not self.config.train_rel_table:
            names = [n for n in names if n != "tam.rel"]
        return names


class TeacherModel(Model):
    pass


class StudentModel(Model):
    def __post_init__(self):
        if self.config.n_streams != 1 or self.config.include_cross:
            self.config = self.config.single_stream(self.config.stream_dims[0])
        super().__post_init__()


def teacher_forward(model: Model, streams: Sequence):
    scores, H = model(streams)
    return scores.data, H.data


def student_forward(model: Model, stream):
    scores, H = model([stream])
    return scores.data, H.data
