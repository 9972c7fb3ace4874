"""Attention-weight traces: data model, binary file format, synthetic generation.

A trace holds one inference task's per-layer, per-head attention-weight
matrices. Traces are immutable after construction and are the common input
to score extraction, allocation, and eviction simulation.

File format (bit-exact): a single-line UTF-8 JSON header terminated by
``\\n``, followed immediately by ``layers * heads * seq_len * seq_len``
IEEE-754 binary32 little-endian values in layer-major / head / row-major
order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

HEADER_DTYPE = "f32le"
HEADER_VERSION = 1

# Row sums are held to 1e-5 internally; files are accepted up to 1e-3 so
# traces exported from half-precision sources still load.
ROW_SUM_ATOL = 1e-5
LOAD_ROW_SUM_ATOL = 1e-3


class TraceFormatError(ValueError):
    """Raised when a trace file or trace payload violates the format contract."""


@dataclass(frozen=True)
class TraceHeader:
    """Shape and encoding metadata for one attention trace."""

    layers: int
    heads: int
    seq_len: int
    version: int = HEADER_VERSION
    dtype: str = HEADER_DTYPE

    def __post_init__(self) -> None:
        if self.version != HEADER_VERSION:
            raise TraceFormatError(f"unsupported trace version {self.version!r}")
        if self.dtype != HEADER_DTYPE:
            raise TraceFormatError(f"unsupported dtype {self.dtype!r} (version 1 is {HEADER_DTYPE} only)")
        if self.layers < 1 or self.heads < 1:
            raise TraceFormatError(f"layers and heads must be >= 1, got {self.layers}x{self.heads}")
        if self.seq_len < 2:
            raise TraceFormatError(f"seq_len must be >= 2, got {self.seq_len}")

    @property
    def payload_bytes(self) -> int:
        return self.layers * self.heads * self.seq_len * self.seq_len * 4

    def to_json_line(self) -> bytes:
        obj = {
            "version": self.version,
            "layers": self.layers,
            "heads": self.heads,
            "seq_len": self.seq_len,
            "dtype": self.dtype,
        }
        return json.dumps(obj, separators=(",", ":")).encode("utf-8") + b"\n"

    @classmethod
    def from_json_line(cls, line: bytes) -> "TraceHeader":
        try:
            obj = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise TraceFormatError(f"malformed trace header: {exc}") from exc
        if not isinstance(obj, dict):
            raise TraceFormatError("malformed trace header: not a JSON object")
        missing = {"version", "layers", "heads", "seq_len", "dtype"} - obj.keys()
        if missing:
            raise TraceFormatError(f"trace header missing keys: {sorted(missing)}")
        return cls(
            layers=obj["layers"],
            heads=obj["heads"],
            seq_len=obj["seq_len"],
            version=obj["version"],
            dtype=obj["dtype"],
        )


@dataclass(frozen=True)
class AttentionTrace:
    """Per-layer, per-head causal attention weights for one task.

    ``weights`` has shape ``(layers, heads, seq_len, seq_len)``; every row of
    every per-head matrix is a probability distribution over positions up to
    its own index (zeros above the diagonal, row sums 1).
    """

    header: TraceHeader
    weights: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        w = np.ascontiguousarray(self.weights, dtype=np.float32)
        expected = (self.header.layers, self.header.heads, self.header.seq_len, self.header.seq_len)
        if w.shape != expected:
            raise TraceFormatError(f"weights shape {w.shape} does not match header {expected}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def layers(self) -> int:
        return self.header.layers

    @property
    def heads(self) -> int:
        return self.header.heads

    @property
    def seq_len(self) -> int:
        return self.header.seq_len

    def validate(self, row_sum_atol: float = ROW_SUM_ATOL) -> None:
        """Check causality and row-stochasticity, reporting the first offender.

        Raises TraceFormatError carrying layer/head/row coordinates.
        """
        t = self.seq_len
        upper = ~np.tri(t, dtype=bool)
        for layer in range(self.layers):
            for head in range(self.heads):
                mat = self.weights[layer, head]
                bad = np.argwhere((mat != 0) & upper)
                if bad.size:
                    row, col = bad[0]
                    raise TraceFormatError(
                        f"causality violation at layer {layer}, head {head}, "
                        f"row {row}: nonzero weight in column {col}"
                    )
                sums = mat.sum(axis=1, dtype=np.float64)
                off = np.abs(sums - 1.0)
                if off.max() > row_sum_atol:
                    row = int(off.argmax())
                    raise TraceFormatError(
                        f"row-sum violation at layer {layer}, head {head}, "
                        f"row {row}: sum {sums[row]:.6f} deviates beyond {row_sum_atol:g}"
                    )

    def layer_mean(self, layer: int) -> np.ndarray:
        """Head-averaged attention matrix for one layer, as float64."""
        return self.weights[layer].astype(np.float64).mean(axis=0)


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters for seeded synthetic trace generation.

    ``sparsity`` is the fraction of columns carrying most of the attention
    mass; ``layer_skew`` controls how strongly the heavy-column sets (and the
    mass concentration) vary across layers. Generation is a pure function of
    the spec: identical specs yield bit-identical traces.
    """

    layers: int
    heads: int
    seq_len: int
    sparsity: float = 0.1
    seed: int = 0
    layer_skew: float = 0.0

    def __post_init__(self) -> None:
        if self.layers < 1 or self.heads < 1:
            raise ValueError(f"layers and heads must be >= 1, got {self.layers}x{self.heads}")
        if self.seq_len < 2:
            raise ValueError(f"seq_len must be >= 2, got {self.seq_len}")
        if not (0.0 < self.sparsity <= 1.0):
            raise ValueError(f"sparsity must be in (0, 1], got {self.sparsity}")
        if self.layer_skew < 0.0:
            raise ValueError(f"layer_skew must be >= 0, got {self.layer_skew}")


def generate_trace(spec: SyntheticSpec) -> AttentionTrace:
    """Generate a causal, row-stochastic trace with sparse column structure.

    Each layer concentrates most attention mass on a small heavy-column set
    drawn from a seeded permutation and shifted by ``layer_index *
    layer_skew``; the concentration itself also relaxes with the shifted
    layer index, so layers differ both in where the mass sits and in how
    hard it is to retain. With ``layer_skew == 0`` all layers are identical.
    """
    t = spec.seq_len
    rng = np.random.default_rng(spec.seed)
    k_heavy = max(1, int(round(spec.sparsity * t)))
    # Heavy columns live in the leading 3/4 of positions and shift cyclically
    # within that span: the tail is observation-window territory, and letting
    # heavy mass drift into it would make layers differ by clipping accidents
    # rather than by the intended skew.
    span = max(k_heavy, (3 * t) // 4)
    base_columns = rng.permutation(span)[:k_heavy]
    # Per-column jitter shared across layers: keeps rows off exact ties
    # without breaking cross-layer retention agreement at layer_skew == 0.
    jitter = 1.0 + 0.05 * rng.uniform(-1.0, 1.0, size=t)

    weights = np.empty((spec.layers, spec.heads, t, t), dtype=np.float32)
    lower = np.tri(t, dtype=np.float64)
    denom = max(1, spec.layers - 1)
    for layer in range(spec.layers):
        shift = int(round(layer * spec.layer_skew))
        heavy = (base_columns + shift) % span
        # Mass share of the heavy set: 0.95 at the first layer, easing toward
        # 0.50 as layer_skew * layer grows. Seed-independent, so tasks of the
        # same spec family share one cross-layer sensitivity trend.
        share = 0.95 - 0.45 * np.tanh(spec.layer_skew * layer / denom)
        profile = np.full(t, (1.0 - share) / max(1, t - k_heavy), dtype=np.float64)
        profile[heavy] = share / k_heavy
        if k_heavy == t:
            profile[:] = 1.0 / t
        profile *= jitter
        for head in range(spec.heads):
            tempered = profile if spec.heads == 1 else profile ** (0.9 + 0.2 * head / (spec.heads - 1))
            mat = lower * tempered[None, :]
            mat /= mat.sum(axis=1, keepdims=True)
            weights[layer, head] = mat.astype(np.float32)

    header = TraceHeader(layers=spec.layers, heads=spec.heads, seq_len=t)
    trace = AttentionTrace(header=header, weights=weights)
    trace.validate()
    return trace


def save_trace(trace: AttentionTrace, path: str | Path) -> None:
    """Write a trace to disk in the bit-exact header+payload format.

    Refuses to save traces whose invariants do not hold.
    """
    trace.validate(row_sum_atol=LOAD_ROW_SUM_ATOL)
    path = Path(path)
    data = trace.header.to_json_line() + trace.weights.astype("<f4").tobytes(order="C")
    path.write_bytes(data)


def load_trace(path: str | Path) -> AttentionTrace:
    """Read a trace file, validating format, payload length, and invariants."""
    raw = Path(path).read_bytes()
    newline = raw.find(b"\n")
    if newline < 0:
        raise TraceFormatError("malformed trace file: missing header line")
    header = TraceHeader.from_json_line(raw[:newline])
    payload = raw[newline + 1 :]
    if len(payload) != header.payload_bytes:
        raise TraceFormatError(
            f"payload length {len(payload)} bytes does not match header "
            f"(expected {header.payload_bytes})"
        )
    shape = (header.layers, header.heads, header.seq_len, header.seq_len)
    weights = np.frombuffer(payload, dtype="<f4").reshape(shape)
    trace = AttentionTrace(header=header, weights=weights)
    trace.validate(row_sum_atol=LOAD_ROW_SUM_ATOL)
    return trace
