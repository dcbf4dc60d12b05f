"""Temporal aggregation: disentangled self/cross attention over T streams.

For stream t the attention logits are a sum of up to four terms

* self content-to-content   ``Q_t[i] . K_t[j]``
* cross content-to-content  ``sum_{u != t} Q_t[i] . K_u[j]``
* content-to-position       ``Q_t[i] . K_r[bucket(i, j)]``
* position-to-content       ``K_t[j] . Q_r[bucket(j, i)]``

scaled by ``sqrt(m * d)`` where ``m`` counts the enabled terms (cross
counts ``T - 1``).  The positional queries/keys come from one relative
embedding table shared by every stream.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import diffcore as dc
from .config import COMPONENTS


def relative_bucket(i: int, j: int, k: int) -> int:
    """Bucket of the signed distance ``i - j``, saturating at ``+-k``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    diff = i - j
    if diff <= -k:
        return 0
    if diff >= k:
        return 2 * k - 1
    return diff + k


def bucket_matrix(n: int, k: int) -> np.ndarray:
    """``G[i, j] = relative_bucket(i, j, k)`` for all ``i, j < n``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    idx = np.arange(n)
    diff = idx[:, None] - idx[None, :]
    return np.where(diff <= -k, 0, np.where(diff >= k, 2 * k - 1, diff + k)).astype(np.intp)


@dataclass
class AttentionParams:
    """Per-stream content projections plus the shared positional ones.

    ``wq``/``wk``/``wv`` hold one ``d x d`` matrix per stream; ``rel_table``
    is the ``2k x d`` relative embedding table.  Entries may be numpy arrays
    or :class:`~dakd.diffcore.Tensor` leaves.
    """

    wq: list
    wk: list
    wv: list
    wq_r: object
    wk_r: object
    rel_table: object
    n_heads: int

    def __post_init__(self):
        T = len(self.wq)
        if T < 1 or len(self.wk) != T or len(self.wv) != T:
            raise ValueError("need one (q, k, v) projection triple per stream")
        d = np.shape(_data(self.wq_r))[0]
        for m in [*self.wq, *self.wk, *self.wv, self.wq_r, self.wk_r]:
            if np.shape(_data(m)) != (d, d):
                raise dc.ShapeError(f"projection of shape {np.shape(_data(m))}, expected {(d, d)}")
        rows, width = np.shape(_data(self.rel_table))
        if width != d or rows < 2 or rows % 2:
            raise dc.ShapeError(f"relative table of shape {(rows, width)} is not 2k x {d}")
        if self.n_heads < 1 or d % self.n_heads:
            raise ValueError(f"{self.n_heads} heads do not divide d={d}")

    @property
    def n_streams(self) -> int:
        return len(self.wq)

    @property
    def d(self) -> int:
        return np.shape(_data(self.wq_r))[0]

    @property
    def k(self) -> int:
        return np.shape(_data(self.rel_table))[0] // 2

    @classmethod
    def from_flat(cls, params: Mapping, n_streams: int, n_heads: int, prefix: str = "tam.") -> "AttentionParams":
        return cls(
            wq=[params[f"{prefix}wq.{t}"] for t in range(n_streams)],
            wk=[params[f"{prefix}wk.{t}"] for t in range(n_streams)],
            wv=[params[f"{prefix}wv.{t}"] for t in range(n_streams)],
            wq_r=params[f"{prefix}wq_r"],
            wk_r=params[f"{prefix}wk_r"],
            rel_table=params[f"{prefix}rel"],
            n_heads=n_heads,
        )

    def permuted(self, order: Sequence[int]) -> "AttentionParams":
        return AttentionParams([self.wq[t] for t in order], [self.wk[t] for t in order],
                               [self.wv[t] for t in order], self.wq_r, self.wk_r,
                               self.rel_table, self.n_heads)


@dataclass
class AttentionOutput:
    per_stream: list  # H_t, each (..., n_s, d)
    H: dc.Tensor  # mean over streams
    logits: list | None = None  # raw (unscaled) logits per stream, (..., h, n_s, n_s)


def _data(x):
    return x.data if isinstance(x, dc.Tensor) else x


def _split_heads(x: dc.Tensor, h: int) -> dc.Tensor:
    *lead, n, d = x.shape
    x = dc.reshape(x, (*lead, n, h, d // h))
    nd = len(lead) + 3
    axes = list(range(nd))
    axes[-3], axes[-2] = axes[-2], axes[-3]
    return dc.transpose(x, axes)


def _merge_heads(x: dc.Tensor) -> dc.Tensor:
    *lead, h, n, dh = x.shape
    nd = len(lead) + 3
    axes = list(range(nd))
    axes[-3], axes[-2] = axes[-2], axes[-3]
    return dc.reshape(dc.transpose(x, axes), (*lead, n, h * dh))


def term_count(components: Iterable[str], n_streams: int) -> int:
    comps = set(components)
    m = 0
    m += "self" in comps
    m += (n_streams - 1) if "cross" in comps else 0
    m += "c2p" in comps
    m += "p2c" in comps
    return m


def ablate_components(streams: Sequence, params: AttentionParams, components: Iterable[str],
                      return_logits: bool = False) -> AttentionOutput:
    """Attention with only the listed logit terms enabled."""
    comps = set(components)
    if not comps:
        raise ValueError("at least one attention component must be enabled")
    if comps - set(COMPONENTS):
        raise ValueError(f"unknown components {comps - set(COMPONENTS)}")
    streams = [dc.as_tensor(z) for z in streams]
    T = len(streams)
    if T != params.n_streams:
        raise dc.ShapeError(f"{T} streams given, params built for {params.n_streams}")
    shape0 = streams[0].shape
    if any(z.shape != shape0 for z in streams):
        raise dc.ShapeError(f"stream shapes differ: {[z.shape for z in streams]}")
    d, h = params.d, params.n_heads
    if shape0[-1] != d:
        raise dc.ShapeError(f"stream width {shape0[-1]} != attention width {d}")
    n = shape0[-2]

    if T == 1:
        comps.discard("cross")
        if not comps:
            raise ValueError("cross content-to-content alone is empty for a single stream")
    m = term_count(comps, T)
    inv_scale = 1.0 / np.sqrt(m * d)

    Q = [_split_heads(z @ w, h) for z, w in zip(streams, params.wq)]
    K = [_split_heads(z @ w, h) for z, w in zip(streams, params.wk)]
    V = [_split_heads(z @ w, h) for z, w in zip(streams, params.wv)]

    G = bucket_matrix(n, params.k)
    rows = np.arange(n)[:, None]
    cols = np.arange(n)[None, :]
    if "c2p" in comps:
        Kr = _split_heads(dc.as_tensor(params.rel_table) @ params.wk_r, h)  # (h, 2k, dh)
    if "p2c" in comps:
        Qr = _split_heads(dc.as_tensor(params.rel_table) @ params.wq_r, h)
    if "cross" in comps:
        K_total = K[0]
        for kk in K[1:]:
            K_total = K_total + kk

    outs, logits = [], []
    for t in range(T):
        terms = []
        if "self" in comps:
            terms.append(Q[t] @ dc.transpose(K[t]))
        if "cross" in comps:
            terms.append(Q[t] @ dc.transpose(K_total - K[t]))
        if "c2p" in comps:
            full = Q[t] @ dc.transpose(Kr)  # (..., h, n, 2k)
            terms.append(full[..., rows, G])
        if "p2c" in comps:
            full = K[t] @ dc.transpose(Qr)  # (..., h, n_j, 2k)
            terms.append(full[..., cols, G.T])
        A = terms[0]
        for term in terms[1:]:
            A = A + term
        weights = dc.softmax(dc.scale(A, inv_scale))
        outs.append(_merge_heads(weights @ V[t]))
        logits.append(A)

    H = outs[0]
    for o in outs[1:]:
        H = H + o
    H = dc.scale(H, 1.0 / T)
    return AttentionOutput(outs, H, logits if return_logits else None)


def tam_forward(streams: Sequence, params: AttentionParams, include_cross: bool = True,
                return_logits: bool = False) -> AttentionOutput:
    comps = ("self", "cross", "c2p", "p2c") if include_cross else ("self", "c2p", "p2c")
    return ablate_components(streams, params, comps, return_logits=return_logits)


def softmax_divisor(n_streams: int, d: int, include_cross: bool = True) -> float:
    comps = ("self", "cross", "c2p", "p2c") if include_cross else ("self", "c2p", "p2c")
    return float(np.sqrt(term_count(comps, n_streams) * d))
