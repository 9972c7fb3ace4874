"""Greedy per-layer cache-size allocation with an exhaustive verification oracle.

Given one score vector per layer, the allocator hands out cache slots one
token at a time, always to the layer whose best unselected token contributes
the largest normalized score. Two constraint modes exist: spend exactly a
total budget of ``N`` slots (maximizing the average retention), or reach a
target average retention with as few slots as possible.

``oracle_allocate`` solves the same problems by enumerating every integer
composition; the test suite holds the greedy to it.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import metrics
from .attnproc import ScoreVector

# Wait-list value for layers with every token already allocated; never wins
# an argmax against a real (nonnegative) gain.
EXHAUSTED = float("-inf")

ORACLE_MAX_COMBINATIONS = 10**6


@dataclass(frozen=True)
class AllocationList:
    """Per-layer cache sizes ``n_1 .. n_l`` in tokens."""

    sizes: tuple[int, ...]

    def __post_init__(self) -> None:
        sizes = tuple(int(n) for n in self.sizes)
        if any(n < 0 for n in sizes):
            raise ValueError(f"cache sizes must be >= 0, got {sizes}")
        object.__setattr__(self, "sizes", sizes)

    def __len__(self) -> int:
        return len(self.sizes)

    @property
    def total(self) -> int:
        return sum(self.sizes)

    def to_json(self) -> str:
        return json.dumps({"sizes": list(self.sizes)}, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "AllocationList":
        obj = json.loads(text)
        if not isinstance(obj, dict) or "sizes" not in obj:
            raise ValueError('allocation JSON must be an object with a "sizes" key')
        return cls(sizes=tuple(obj["sizes"]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["layer", "n"])
        for layer, n in enumerate(self.sizes):
            writer.writerow([layer, n])
        return buf.getvalue()


@dataclass(frozen=True)
class Constraint:
    """Either a total-size budget or a target average retention."""

    mode: str
    value: int | float

    def __post_init__(self) -> None:
        if self.mode == "budget":
            if int(self.value) != self.value or self.value < 0:
                raise ValueError(f"budget must be a nonnegative integer, got {self.value}")
            object.__setattr__(self, "value", int(self.value))
        elif self.mode == "target":
            if not 0.0 < float(self.value) <= 1.0:
                raise ValueError(f"target average retention must be in (0, 1], got {self.value}")
            object.__setattr__(self, "value", float(self.value))
        else:
            raise ValueError(f"unknown constraint mode {self.mode!r}")

    @classmethod
    def budget(cls, total_size: int) -> "Constraint":
        return cls(mode="budget", value=total_size)

    @classmethod
    def target(cls, target_r_avg: float) -> "Constraint":
        return cls(mode="target", value=target_r_avg)


@dataclass
class WaitList:
    """Per-layer marginal contribution of the next-best unselected token.

    Entry ``i`` holds the largest not-yet-allocated normalized score of layer
    ``i``, or the exhausted sentinel once the layer has no tokens left.
    """

    next_gain: np.ndarray

    @classmethod
    def from_gains(cls, gains: list[np.ndarray]) -> "WaitList":
        first = [g[0] if g.size else EXHAUSTED for g in gains]
        return cls(next_gain=np.asarray(first, dtype=np.float64))

    def best_layer(self) -> int:
        # np.argmax returns the first maximum: ties break toward the lowest
        # layer index.
        return int(np.argmax(self.next_gain))

    def advance(self, layer: int, gains: list[np.ndarray], allocated: Sequence[int]) -> None:
        n = allocated[layer]
        self.next_gain[layer] = gains[layer][n] if n < gains[layer].size else EXHAUSTED


def _prepare(scores: Sequence[ScoreVector | np.ndarray]) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Sort each layer once; return normalized gain arrays and retention curves."""
    if not len(scores):
        raise ValueError("need at least one layer of scores")
    gains, curves = [], []
    for w in scores:
        curve = metrics.retention_curve(w)
        curves.append(curve)
        # curve is the cumulative normalized mass; its forward differences are
        # the sorted scores over the total.
        gains.append(np.diff(curve))
    return gains, curves


def marginal_gain(w: ScoreVector | np.ndarray, current_n: int) -> float:
    """Normalized score of the next token the layer would admit.

    Returns the ``(current_n + 1)``-th largest score divided by the layer
    total, or the exhausted sentinel once every token is allocated.
    """
    curve = metrics.retention_curve(w)
    size = curve.size - 1
    if not 0 <= current_n <= size:
        raise ValueError(f"current_n must be in [0, {size}], got {current_n}")
    if current_n == size:
        return EXHAUSTED
    return float(curve[current_n + 1] - curve[current_n])


def allocation_r_avg(
    scores: Sequence[ScoreVector | np.ndarray], allocation: AllocationList
) -> float:
    """Average retention achieved by an allocation on the given scores."""
    _, curves = _prepare(scores)
    if len(allocation) != len(curves):
        raise ValueError(f"allocation has {len(allocation)} layers, scores have {len(curves)}")
    return metrics.r_avg(float(curves[i][n]) for i, n in enumerate(allocation.sizes))


def allocate(
    scores: Sequence[ScoreVector | np.ndarray], constraint: Constraint
) -> AllocationList:
    """Greedy token-at-a-time allocation under a budget or retention target.

    Budget mode runs exactly ``N`` iterations, each granting one slot to the
    layer with the largest wait-list entry; target mode stops at the first
    iteration where the average retention reaches the target. Per-layer
    normalization makes the outcome invariant to rescaling any layer's
    scores.
    """
    gains, curves = _prepare(scores)
    l = len(gains)
    caps = [g.size for g in gains]
    allocated = [0] * l
    retained = [0.0] * l
    wait = WaitList.from_gains(gains)

    if constraint.mode == "budget":
        total_size = int(constraint.value)
        capacity = sum(caps)
        if total_size > capacity:
            raise ValueError(f"budget {total_size} exceeds capacity {capacity}")
        for _ in range(total_size):
            layer = wait.best_layer()
            allocated[layer] += 1
            wait.advance(layer, gains, allocated)
        return AllocationList(sizes=tuple(allocated))

    target = float(constraint.value)
    while metrics.r_avg(retained) < target:
        layer = wait.best_layer()
        allocated[layer] += 1
        retained[layer] = float(curves[layer][allocated[layer]])
        wait.advance(layer, gains, allocated)
    return AllocationList(sizes=tuple(allocated))


def oracle_allocate(
    scores: Sequence[ScoreVector | np.ndarray], constraint: Constraint
) -> AllocationList:
    """Brute-force reference: enumerate every composition, pick the optimum.

    Budget mode maximizes the average retention among compositions summing
    exactly to ``N``; target mode minimizes the total among compositions
    reaching the target. Ties resolve to the lexicographically smallest
    composition. Guarded against search spaces above ``10**6`` combinations.
    """
    _, curves = _prepare(scores)
    l = len(curves)
    caps = [c.size - 1 for c in curves]
    space = 1
    for cap in caps:
        space *= cap + 1
        if space > ORACLE_MAX_COMBINATIONS:
            raise ValueError(
                f"search space exceeds {ORACLE_MAX_COMBINATIONS} combinations; "
                "use the greedy allocator"
            )
    ranges = [range(cap + 1) for cap in caps]

    if constraint.mode == "budget":
        total_size = int(constraint.value)
        if total_size > sum(caps):
            raise ValueError(f"budget {total_size} exceeds capacity {sum(caps)}")
        best_sizes, best_r = None, -1.0
        for combo in itertools.product(*ranges):
            if sum(combo) != total_size:
                continue
            r = metrics.r_avg(float(curves[i][n]) for i, n in enumerate(combo))
            if r > best_r:
                best_sizes, best_r = combo, r
        assert best_sizes is not None
        return AllocationList(sizes=best_sizes)

    target = float(constraint.value)
    best_sizes, best_total = None, sum(caps) + 1
    for combo in itertools.product(*ranges):
        total = sum(combo)
        if total >= best_total:
            continue
        r = metrics.r_avg(float(curves[i][n]) for i, n in enumerate(combo))
        if r >= target:
            best_sizes, best_total = combo, total
    assert best_sizes is not None
    return AllocationList(sizes=best_sizes)


def uniform_allocation(
    total_size: int, num_layers: int, capacity_per_layer: int
) -> AllocationList:
    """Spread a total budget as evenly as layer capacities allow.

    The remainder goes to the earliest layers; overflow beyond a layer's
    capacity is redistributed so the total is preserved exactly.
    """
    if num_layers < 1:
        raise ValueError("need at least one layer")
    if not 0 <= total_size <= num_layers * capacity_per_layer:
        raise ValueError(
            f"total {total_size} outside [0, {num_layers * capacity_per_layer}]"
        )
    base, extra = divmod(total_size, num_layers)
    sizes = [base + (1 if i < extra else 0) for i in range(num_layers)]
    overflow = sum(max(0, n - capacity_per_layer) for n in sizes)
    sizes = [min(n, capacity_per_layer) for n in sizes]
    i = 0
    while overflow > 0:
        if sizes[i] < capacity_per_layer:
            room = min(overflow, capacity_per_layer - sizes[i])
            sizes[i] += room
            overflow -= room
        i += 1
    return AllocationList(sizes=tuple(sizes))
