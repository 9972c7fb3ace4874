"""A deterministic toy transformer for desk-scale prefill experiments.

Two forward passes share one arithmetic path: ``full_prefill`` runs every
layer end to end, records each layer's attention weights, and keeps the
per-layer key/value projections (the cache a real inference run would hold);
``mini_prefill`` runs the same layers but caches nothing and terminates the
moment the last layer's attention weights exist. Their attention traces are
elementwise equal, which is what lets allocation decisions computed on the
cheap pass apply to the real one.

Weights are a pure function of the seed: identical configs give bit-identical
results.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attnproc import causal_softmax
from .trace import AttentionTrace, TraceHeader


@dataclass(frozen=True)
class ToyModelConfig:
    """Dimensions and seed of the toy transformer."""

    layers: int = 2
    heads: int = 1
    model_dim: int = 16
    proj_dim: int = 8
    seq_len: int = 16
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("layers", "heads", "model_dim", "proj_dim", "seq_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")


@dataclass(frozen=True)
class PrefillResult:
    """Output of a prefill pass.

    ``per_layer_attention`` has shape ``(layers, heads, seq_len, seq_len)``.
    A full prefill also carries the per-layer K/V projections (float32, the
    4-byte elements a cache would store) and the logits for the first output
    token; a mini prefill carries the attention and nothing else, with a live
    K/V footprint of exactly zero bytes.
    """

    per_layer_attention: np.ndarray = field(repr=False)
    kv_pairs: list[tuple[np.ndarray, np.ndarray]] | None = None
    first_token_logits: np.ndarray | None = None
    kv_bytes: int = 0

    def attention_trace(self) -> AttentionTrace:
        """Repackage the recorded attention as a standard trace."""
        l, h, t, _ = self.per_layer_attention.shape
        header = TraceHeader(layers=l, heads=h, seq_len=t)
        return AttentionTrace(header=header, weights=self.per_layer_attention.astype(np.float32))


def _rms_normalize(x: np.ndarray) -> np.ndarray:
    # Unit-gain RMS normalization; eps keeps zero rows finite.
    return x / np.sqrt(np.mean(x * x, axis=-1, keepdims=True) + 1e-6)


class _Weights:
    """All model parameters, drawn once per config in a fixed order."""

    def __init__(self, config: ToyModelConfig):
        rng = np.random.default_rng(config.seed)
        scale = 1.0 / np.sqrt(config.model_dim)
        d, p, h = config.model_dim, config.proj_dim, config.heads

        def draw(*shape: int) -> np.ndarray:
            return rng.uniform(-1.0, 1.0, size=shape) * scale

        self.layers = []
        for _ in range(config.layers):
            self.layers.append(
                {
                    "wq": draw(h, d, p),
                    "wk": draw(h, d, p),
                    "wv": draw(h, d, p),
                    "wo": draw(h * p, d),
                    "w1": draw(d, 4 * d),
                    "w2": draw(4 * d, d),
                }
            )
        self.unembed = draw(d, d)


def default_input(config: ToyModelConfig) -> np.ndarray:
    """Seeded random token embeddings, shape (seq_len, model_dim)."""
    rng = np.random.default_rng([config.seed, 1])
    return rng.uniform(-1.0, 1.0, size=(config.seq_len, config.model_dim))


def _check_input(config: ToyModelConfig, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (config.seq_len, config.model_dim):
        raise ValueError(
            f"input shape {x.shape} does not match config "
            f"({config.seq_len}, {config.model_dim})"
        )
    return x


def _forward(
    config: ToyModelConfig, x: np.ndarray, *, keep_kv: bool, stop_after_last_attention: bool
) -> PrefillResult:
    weights = _Weights(config)
    t, p, h = config.seq_len, config.proj_dim, config.heads
    attention = np.empty((config.layers, h, t, t), dtype=np.float64)
    kv_pairs: list[tuple[np.ndarray, np.ndarray]] = []
    kv_bytes = 0

    for layer_idx, lw in enumerate(weights.layers):
        last = layer_idx == config.layers - 1
        xn = _rms_normalize(x)
        keys = np.empty((h, t, p))
        values = np.empty((h, t, p))
        contexts = np.empty((h, t, p))
        for head in range(h):
            q = xn @ lw["wq"][head]
            k = xn @ lw["wk"][head]
            attn = causal_softmax(q @ k.T / np.sqrt(p))
            attention[layer_idx, head] = attn
            if stop_after_last_attention and last:
                continue
            v = xn @ lw["wv"][head]
            keys[head], values[head] = k, v
            contexts[head] = attn @ v
        if stop_after_last_attention and last:
            # All attention statistics exist; the rest of the layer is dead
            # weight for scoring purposes.
            return PrefillResult(per_layer_attention=attention, kv_bytes=0)
        if keep_kv:
            k32 = keys.astype(np.float32)
            v32 = values.astype(np.float32)
            kv_pairs.append((k32, v32))
            kv_bytes += k32.nbytes + v32.nbytes
        x = x + contexts.transpose(1, 0, 2).reshape(t, h * p) @ lw["wo"]
        hn = _rms_normalize(x)
        x = x + np.tanh(hn @ lw["w1"]) @ lw["w2"]

    logits = _rms_normalize(x)[-1] @ weights.unembed
    return PrefillResult(
        per_layer_attention=attention,
        kv_pairs=kv_pairs if keep_kv else None,
        first_token_logits=logits,
        kv_bytes=kv_bytes,
    )


def full_prefill(config: ToyModelConfig, x: np.ndarray | None = None) -> PrefillResult:
    """Run every layer, keeping attention weights, K/V pairs, and logits."""
    x = default_input(config) if x is None else _check_input(config, x)
    return _forward(config, x, keep_kv=True, stop_after_last_attention=False)


def mini_prefill(config: ToyModelConfig, x: np.ndarray | None = None) -> PrefillResult:
    """Run the same layers cache-free, stopping after the last attention.

    The recorded attention weights equal ``full_prefill``'s elementwise; no
    K/V is ever stored, so the live cache footprint is zero bytes.
    """
    x = default_input(config) if x is None else _check_input(config, x)
    return _forward(config, x, keep_kv=False, stop_after_last_attention=True)
