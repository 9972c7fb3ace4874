"""Allocation reuse across tasks of one type.

Running the scoring pass and the allocator for every task costs time. Tasks
of the same type tend to want similar per-layer cache sizes, so a small
sample of tasks can be processed fully, their allocation lists averaged, and
the averaged list reused for the rest.

Averaging preserves totals exactly: per-layer means are rounded with a
largest-remainder correction so that the output total equals the rounded
mean of the sample totals. All arithmetic is integer-exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .allocator import AllocationList

DEFAULT_SAMPLE_RATIO = 0.10


def average_allocations(samples: Sequence[AllocationList]) -> AllocationList:
    """Per-layer mean allocation, total-preserving.

    Each layer gets the floor of its mean size; the remaining slots (up to
    the rounded mean total, half rounding up) go to the layers with the
    largest fractional remainders, lower layer index first on ties.
    """
    if not len(samples):
        raise ValueError("need at least one allocation sample")
    lengths = {len(s) for s in samples}
    if len(lengths) != 1:
        raise ValueError(f"samples disagree on layer count: {sorted(lengths)}")
    count = len(samples)
    layer_sums = [sum(s.sizes[i] for s in samples) for i in range(lengths.pop())]
    # round-half-up of (sum of totals) / count, kept in integers
    grand_total = sum(layer_sums)
    target_total = (2 * grand_total + count) // (2 * count)
    floors = [s // count for s in layer_sums]
    remainders = [s % count for s in layer_sums]
    deficit = target_total - sum(floors)
    order = sorted(range(len(floors)), key=lambda i: (-remainders[i], i))
    sizes = list(floors)
    for i in order[:deficit]:
        sizes[i] += 1
    return AllocationList(sizes=tuple(sizes))


def profile_similarity(samples: Sequence[AllocationList]) -> float:
    """Mean pairwise Pearson correlation of per-layer size vectors.

    Quantifies how consistent the cross-layer allocation trend is across
    sampled tasks; requires at least two samples and non-constant vectors.
    """
    if len(samples) < 2:
        raise ValueError("need at least two samples to measure similarity")
    vectors = [np.asarray(s.sizes, dtype=np.float64) for s in samples]
    lengths = {v.size for v in vectors}
    if len(lengths) != 1:
        raise ValueError(f"samples disagree on layer count: {sorted(lengths)}")
    for idx, v in enumerate(vectors):
        if np.ptp(v) == 0:
            raise ValueError(f"sample {idx} is constant across layers; correlation undefined")
    correlations = []
    for i in range(len(vectors)):
        for j in range(i + 1, len(vectors)):
            correlations.append(float(np.corrcoef(vectors[i], vectors[j])[0, 1]))
    return float(np.mean(correlations))


@dataclass(frozen=True)
class AllocationProfile:
    """Recorded allocations for one task type plus their reusable average."""

    task_type: str
    samples: tuple[AllocationList, ...]
    averaged: AllocationList
    sample_ratio: float = DEFAULT_SAMPLE_RATIO

    def __post_init__(self) -> None:
        if not self.samples:
            raise ValueError("profile needs at least one sample")
        lengths = {len(s) for s in self.samples} | {len(self.averaged)}
        if len(lengths) != 1:
            raise ValueError("samples and average must share one layer count")


def build_profile(
    task_type: str,
    samples: Sequence[AllocationList],
    sample_ratio: float = DEFAULT_SAMPLE_RATIO,
) -> AllocationProfile:
    """Assemble a profile, computing the averaged list from the samples."""
    return AllocationProfile(
        task_type=task_type,
        samples=tuple(samples),
        averaged=average_allocations(samples),
        sample_ratio=sample_ratio,
    )


def save_profile(profile: AllocationProfile, path: str | Path) -> None:
    payload = {
        "task_type": profile.task_type,
        "samples": [list(s.sizes) for s in profile.samples],
        "averaged": list(profile.averaged.sizes),
        "sample_ratio": profile.sample_ratio,
    }
    Path(path).write_text(json.dumps(payload, separators=(",", ":")) + "\n", encoding="utf-8")


def load_profile(path: str | Path) -> AllocationProfile:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    missing = {"task_type", "samples", "averaged"} - obj.keys()
    if missing:
        raise ValueError(f"profile file missing keys: {sorted(missing)}")
    return AllocationProfile(
        task_type=obj["task_type"],
        samples=tuple(AllocationList(sizes=tuple(s)) for s in obj["samples"]),
        averaged=AllocationList(sizes=tuple(obj["averaged"])),
        sample_ratio=obj.get("sample_ratio", DEFAULT_SAMPLE_RATIO),
    )
