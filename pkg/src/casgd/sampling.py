"""Deterministic, seedable batch index streams.

Draws come from a counter-based generator: draw number ``i`` of a stream
is ``mix64(seed + (i+1) * GOLDEN)`` where ``mix64`` is the SplitMix64
finalizer.  A batch at cursor ``t`` consumes draw numbers ``t*b .. t*b+b-1``,
so any batch can be materialized from ``(seed, t)`` alone -- the s-step
solver looks ahead without shared mutable state, and sequences are
bit-identical across platforms.

Within a batch, indices are sampled without replacement by a partial
Fisher-Yates walk over a virtual index window (a dict holds only the
displaced entries).  Batches at different cursors are independent; a row
may repeat across iterations.

``per_rank`` mode stratifies a batch over contiguous rank row ranges:
each rank contributes ``b/p`` local indices, concatenated in rank order,
drawn from draw numbers ``t*b + rank*(b/p) + k``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .sparse import RowBlockSelector

__all__ = ["BatchStream", "RowBlockSelector"]

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _mix64(z: int) -> int:
    z &= _MASK
    z ^= z >> 30
    z = (z * _MIX1) & _MASK
    z ^= z >> 27
    z = (z * _MIX2) & _MASK
    z ^= z >> 31
    return z


def _draw(seed: int, index: int) -> int:
    return _mix64((seed + (index + 1) * _GOLDEN) & _MASK)


def _sample_window(seed: int, first_draw: int, count: int, start: int, size: int) -> list[int]:
    """``count`` distinct values from [start, start+size) via partial Fisher-Yates."""
    displaced: dict[int, int] = {}
    out = []
    for k in range(count):
        j = k + _draw(seed, first_draw + k) % (size - k)
        pick = displaced.get(j, j)
        displaced[j] = displaced.get(k, k)
        out.append(start + pick)
    return out


@dataclass
class BatchStream:
    """Stream of row-batch selectors, fully determined by (seed, cursor, m, b, mode)."""

    seed: int
    m: int
    b: int
    mode: str = "global"
    rank_ranges: Sequence[tuple[int, int]] | None = None
    cursor: int = field(default=0)

    def __post_init__(self):
        if self.b < 1 or self.b > self.m:
            raise ValueError(f"batch size {self.b} must be in [1, m={self.m}]")
        if self.mode == "global":
            if self.rank_ranges is not None:
                raise ValueError("rank_ranges only apply to per_rank mode")
        elif self.mode == "per_rank":
            if not self.rank_ranges:
                raise ValueError("per_rank mode requires rank_ranges")
            p = len(self.rank_ranges)
            if self.b % p:
                raise ValueError(f"per_rank mode requires p={p} to divide b={self.b}")
            local = self.b // p
            for start, stop in self.rank_ranges:
                if stop - start < local:
                    raise ValueError(f"rank range [{start},{stop}) holds fewer than {local} rows")
        else:
            raise ValueError(f"unknown mode {self.mode!r}")

    def _indices_at(self, cursor: int) -> list[int]:
        base = cursor * self.b
        if self.mode == "global":
            return _sample_window(self.seed, base, self.b, 0, self.m)
        local = self.b // len(self.rank_ranges)
        picks: list[int] = []
        for rank, (start, stop) in enumerate(self.rank_ranges):
            picks.extend(_sample_window(self.seed, base + rank * local, local, start, stop - start))
        return picks

    def _batch_at(self, cursor: int) -> RowBlockSelector:
        return RowBlockSelector(np.array(self._indices_at(cursor), dtype=np.int64))

    def next_batch(self) -> RowBlockSelector:
        sel = self._batch_at(self.cursor)
        self.cursor += 1
        return sel

    def peek_batches(self, s: int) -> list[RowBlockSelector]:
        """The next ``s`` selectors, without advancing the cursor."""
        return [self._batch_at(self.cursor + t) for t in range(s)]

    def advance(self, s: int) -> None:
        self.cursor += s

    # Plain-int variants of next_batch/peek_batches for solver hot loops;
    # same draws, minus array construction and selector re-validation
    # (Fisher-Yates already guarantees distinct in-range indices).

    def next_indices(self) -> list[int]:
        ids = self._indices_at(self.cursor)
        self.cursor += 1
        return ids

    def peek_indices(self, s: int) -> list[list[int]]:
        return [self._indices_at(self.cursor + t) for t in range(s)]
