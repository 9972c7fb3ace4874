"""Per-layer K/V eviction guided by an allocation list, with memory accounting.

Eviction keeps each layer's ``n_i`` highest-scoring non-window tokens plus
every observation-window token, in original order. The simulation entry
point applies this across all layers of a trace or toy-model run and reports
retained indices, per-layer retention, and the compressed memory footprint.

Window tokens are retained on top of the per-layer budget, not inside it;
every report says so explicitly.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from . import metrics
from .attnproc import ProcSettings, causal_softmax, process_layer
from .allocator import AllocationList
from .toymodel import PrefillResult
from .trace import AttentionTrace

ELEMENT_BYTES = 4

WINDOW_POLICY = "observation window retained in addition to per-layer budget"


@dataclass(frozen=True)
class EvictionReport:
    """Outcome of one simulated task: what survived and what it costs."""

    sizes: tuple[int, ...]
    ows: int
    retained_indices: tuple[tuple[int, ...], ...]
    compression_ratio: float
    bytes_before: int
    bytes_after: int
    per_layer_r: tuple[float, ...]
    r_avg: float
    window_policy: str = WINDOW_POLICY

    @property
    def memory_reduction(self) -> float:
        return 1.0 - self.compression_ratio

    def summary(self) -> str:
        return (
            f"compression ratio {self.compression_ratio * 100:.1f}% "
            f"(memory reduction {self.memory_reduction * 100:.1f}%), "
            f"r_avg {self.r_avg:.4f}, "
            f"{self.bytes_after} of {self.bytes_before} bytes retained; "
            f"{self.window_policy}"
        )

    def to_json(self) -> str:
        payload = {
            "sizes": list(self.sizes),
            "ows": self.ows,
            "retained_indices": [list(idx) for idx in self.retained_indices],
            "compression_ratio": self.compression_ratio,
            "memory_reduction": self.memory_reduction,
            "bytes_before": self.bytes_before,
            "bytes_after": self.bytes_after,
            "per_layer_r": list(self.per_layer_r),
            "r_avg": self.r_avg,
            "window_policy": self.window_policy,
        }
        return json.dumps(payload, separators=(",", ":"))

    def to_csv(self) -> str:
        """Per-layer summary: ``layer,n,retained,r``."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["layer", "n", "retained", "r"])
        for layer, (n, idx, r) in enumerate(
            zip(self.sizes, self.retained_indices, self.per_layer_r)
        ):
            writer.writerow([layer, n, len(idx), repr(r)])
        return buf.getvalue()


def _retained_for_layer(scores: np.ndarray, n: int, seq_len: int, ows: int) -> np.ndarray:
    top = metrics.topk_indices(scores, n)
    window = np.arange(seq_len - ows, seq_len)
    return np.sort(np.concatenate([top, window])).astype(int)


def evict_layer(
    q: np.ndarray,
    k: np.ndarray,
    v: np.ndarray,
    n_i: int,
    settings: ProcSettings,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Evict one layer's K/V rows down to ``n_i`` scored tokens plus the window.

    Recomputes the attention weights from ``q`` and ``k`` (scaled by the
    projection width), scores the non-window tokens, and keeps the top
    ``n_i`` of them (ties toward lower index) along with every window row.
    Returns the retained K rows, V rows, and their original indices in
    ascending order; retained rows are bit-equal slices of the inputs.
    """
    q = np.asarray(q, dtype=np.float64)
    k_arr = np.asarray(k)
    v_arr = np.asarray(v)
    if q.shape != k_arr.shape or k_arr.shape != v_arr.shape or q.ndim != 2:
        raise ValueError(
            f"q, k, v must share one (seq_len, proj_dim) shape, got "
            f"{q.shape}, {k_arr.shape}, {v_arr.shape}"
        )
    t, p = q.shape
    settings.check_seq_len(t)
    if not 0 <= n_i <= t - settings.ows:
        raise ValueError(f"n_i must be in [0, {t - settings.ows}], got {n_i}")
    weights = causal_softmax(q @ np.asarray(k_arr, dtype=np.float64).T / np.sqrt(p))
    scores = process_layer(weights, settings).scores
    retained = _retained_for_layer(scores, n_i, t, settings.ows)
    return k_arr[retained], v_arr[retained], retained


def _attention_and_width(
    source: AttentionTrace | PrefillResult | np.ndarray, proj_dim: int
) -> tuple[np.ndarray, int]:
    if isinstance(source, AttentionTrace):
        return source.weights.astype(np.float64), proj_dim
    if isinstance(source, PrefillResult):
        attn = source.per_layer_attention
        if source.kv_pairs:
            proj_dim = source.kv_pairs[0][0].shape[-1]
        return np.asarray(attn, dtype=np.float64), proj_dim
    attn = np.asarray(source, dtype=np.float64)
    if attn.ndim != 4:
        raise ValueError(f"expected attention of shape (l, h, t, t), got {attn.shape}")
    return attn, proj_dim


def simulate_task(
    source: AttentionTrace | PrefillResult | np.ndarray,
    allocation: AllocationList,
    settings: ProcSettings,
    proj_dim: int = 64,
) -> EvictionReport:
    """Apply per-layer eviction across a whole task and account for memory.

    ``source`` supplies the attention weights: a trace, a prefill result, or
    a raw ``(layers, heads, t, t)`` array. ``proj_dim`` sets the per-token
    projection width used for byte accounting when the source carries no
    K/V (a full-prefill result overrides it with the real width).
    """
    attn, p = _attention_and_width(source, proj_dim)
    l, h, t, _ = attn.shape
    if len(allocation) != l:
        raise ValueError(f"allocation has {len(allocation)} layers, source has {l}")
    settings.check_seq_len(t)
    cap = t - settings.ows
    retained_indices = []
    per_layer_r = []
    for layer in range(l):
        n = allocation.sizes[layer]
        if n > cap:
            raise ValueError(f"layer {layer}: n_i {n} exceeds capacity {cap}")
        scores = process_layer(attn[layer].mean(axis=0), settings, layer=layer).scores
        retained_indices.append(tuple(int(i) for i in _retained_for_layer(scores, n, t, settings.ows)))
        per_layer_r.append(metrics.retention(scores, n))

    ratio = metrics.compression_ratio(allocation.sizes, t, settings.ows)
    per_token = 2 * h * p * ELEMENT_BYTES
    bytes_before = l * t * per_token
    bytes_after = sum((n + settings.ows) * per_token for n in allocation.sizes)
    return EvictionReport(
        sizes=allocation.sizes,
        ows=settings.ows,
        retained_indices=tuple(retained_indices),
        compression_ratio=ratio,
        bytes_before=bytes_before,
        bytes_after=bytes_after,
        per_layer_r=tuple(per_layer_r),
        r_avg=metrics.r_avg(per_layer_r),
    )
