"""Attention processing: turn raw attention weights into per-layer token scores.

The pipeline takes one layer's ``t x t`` attention matrix, keeps the rows of
the observation window (the last ``ows`` positions), drops the window's own
columns, averages over the kept rows, and smooths the result. The output is
one nonnegative score per non-window token; higher means the token matters
more to the window and therefore to the first generated token.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .trace import AttentionTrace

HEAD_REDUCTIONS = ("mean", "sum", "max")


@dataclass(frozen=True)
class ProcSettings:
    """Observation-window size and smoothing-kernel width.

    ``pool_size`` must be odd so the smoothing window is symmetric; the
    window size is validated against a concrete sequence length at apply
    time.
    """

    ows: int = 8
    pool_size: int = 7

    def __post_init__(self) -> None:
        if self.ows < 1:
            raise ValueError(f"ows must be >= 1, got {self.ows}")
        if self.pool_size < 1:
            raise ValueError(f"pool_size must be >= 1, got {self.pool_size}")
        if self.pool_size % 2 == 0:
            raise ValueError(f"pool_size must be odd, got {self.pool_size}")

    def check_seq_len(self, seq_len: int) -> None:
        if self.ows >= seq_len:
            raise ValueError(f"ows {self.ows} must be < seq_len {seq_len}")
        if self.pool_size > seq_len - self.ows:
            raise ValueError(
                f"pool_size {self.pool_size} exceeds non-window length {seq_len - self.ows}"
            )


@dataclass(frozen=True)
class ScoreVector:
    """Per-layer attention-score distribution over non-window tokens."""

    layer: int
    scores: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        s = np.ascontiguousarray(self.scores, dtype=np.float64)
        if s.ndim != 1:
            raise ValueError(f"scores must be a vector, got shape {s.shape}")
        if s.size and s.min() < 0:
            raise ValueError("scores must be nonnegative")
        s.setflags(write=False)
        object.__setattr__(self, "scores", s)

    def __len__(self) -> int:
        return int(self.scores.size)


def causal_softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax over the causal (lower-triangular) part of a square matrix.

    Entries above the diagonal come out exactly zero; rows sum to 1. Uses
    max-subtraction for numerical stability.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2 or logits.shape[0] != logits.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {logits.shape}")
    t = logits.shape[0]
    masked = np.where(np.tri(t, dtype=bool), logits, -np.inf)
    shifted = masked - masked.max(axis=1, keepdims=True)
    weights = np.exp(shifted)
    weights /= weights.sum(axis=1, keepdims=True)
    return weights


def smooth(values: np.ndarray, pool_size: int) -> np.ndarray:
    """Stride-1, length-preserving average smoothing with zero padding.

    Each output position is the mean over a centered window of ``pool_size``
    entries, with ``(pool_size - 1) / 2`` zeros padded at each end; the
    divisor is always ``pool_size``.
    """
    if pool_size == 1:
        return np.asarray(values, dtype=np.float64).copy()
    return np.convolve(np.asarray(values, dtype=np.float64), np.ones(pool_size), mode="same") / pool_size


def process_layer(weights: np.ndarray, settings: ProcSettings, layer: int = 0) -> ScoreVector:
    """Select window rows, drop window columns, average rows, then smooth.

    ``weights`` is one layer's ``t x t`` causal row-stochastic matrix. The
    result has exactly ``t - ows`` entries regardless of pool_size.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim != 2 or weights.shape[0] != weights.shape[1]:
        raise ValueError(f"expected a square attention matrix, got shape {weights.shape}")
    t = weights.shape[0]
    settings.check_seq_len(t)
    selected = weights[t - settings.ows :, : t - settings.ows]
    merged = selected.mean(axis=0)
    return ScoreVector(layer=layer, scores=smooth(merged, settings.pool_size))


def process_trace(
    trace: AttentionTrace, settings: ProcSettings, head_reduce: str = "mean"
) -> list[ScoreVector]:
    """Score every layer of a trace, reducing heads before processing.

    Heads are collapsed to a single ``t x t`` matrix per layer with the given
    reduction ("mean" by default; "sum" and "max" are provided as alternative
    readings of the per-layer score definition).
    """
    if head_reduce not in HEAD_REDUCTIONS:
        raise ValueError(f"head_reduce must be one of {HEAD_REDUCTIONS}, got {head_reduce!r}")
    reducer = {"mean": np.mean, "sum": np.sum, "max": np.max}[head_reduce]
    out = []
    for layer in range(trace.layers):
        mat = reducer(trace.weights[layer].astype(np.float64), axis=0)
        out.append(process_layer(mat, settings, layer=layer))
    return out


def scores_to_csv(score_vectors: list[ScoreVector]) -> str:
    """Serialize score vectors as ``layer,position,score`` CSV."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["layer", "position", "score"])
    for sv in score_vectors:
        for pos, score in enumerate(sv.scores):
            writer.writerow([sv.layer, pos, repr(float(score))])
    return buf.getvalue()


def scores_to_json(score_vectors: list[ScoreVector]) -> str:
    """Serialize score vectors as a JSON list of per-layer objects."""
    payload = [
        {"layer": sv.layer, "scores": [float(x) for x in sv.scores]} for sv in score_vectors
    ]
    return json.dumps(payload, separators=(",", ":"))
