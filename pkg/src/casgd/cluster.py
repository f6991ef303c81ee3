"""Simulated p-rank distributed-memory machine with exact cost counters.

Collectives follow a binomial-tree model: every collective adds
``ceil(log2 p)`` messages and one collective to the counters, and moves
its payload length in words (allreduce: the buffer length; allgather:
the total concatenated length).  Payload accounting is p-independent so
the counter laws hold uniformly down to p = 1.

Reductions sum rank buffers in a fixed ascending-rank tree (pairs at
distance 1, then 2, 4, ...), making every run bit-reproducible.  Ranks
execute sequentially inside each phase; replicated results are
represented once since all rank copies are bitwise equal.

Flop accounting convention (shared with the closed-form cost model):
one flop per sparse multiply-add and per dense axpy element; scalar
nonlinearity evaluations are tallied separately in ``sig_evals`` and
weighted only when converting counters to modeled time.  Counters track
the modeled dataflow of the algorithms, not incidental simulator
shortcuts; trace extraction (loss/accuracy snapshots) is observer access
and never touches the counters.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .sparse import CsrMatrix, LabeledDataset

__all__ = [
    "BLOCK_COLUMN",
    "BLOCK_ROW",
    "CostCounters",
    "LayoutDescriptor",
    "VirtualCluster",
    "partition",
    "tree_message_count",
]

BLOCK_COLUMN = "block_column"
BLOCK_ROW = "block_row"


def tree_message_count(p: int) -> int:
    """ceil(log2 p): rounds of a binomial-tree collective over p ranks."""
    return (p - 1).bit_length()


@dataclass
class CostCounters:
    flops: int = 0
    words_moved: int = 0
    messages: int = 0
    collectives: int = 0
    sig_evals: int = 0

    def reset(self) -> None:
        self.flops = 0
        self.words_moved = 0
        self.messages = 0
        self.collectives = 0
        self.sig_evals = 0

    def snapshot(self) -> "CostCounters":
        return replace(self)

    def as_dict(self) -> dict[str, int]:
        return {
            "flops": self.flops,
            "words": self.words_moved,
            "messages": self.messages,
            "collectives": self.collectives,
            "sig_evals": self.sig_evals,
        }


@dataclass(frozen=True)
class LayoutDescriptor:
    """Contiguous near-equal 1D partition of columns or rows over p ranks."""

    kind: str
    p: int
    boundaries: tuple[tuple[int, int], ...]

    @classmethod
    def build(cls, kind: str, p: int, num_rows: int, num_cols: int) -> "LayoutDescriptor":
        if kind not in (BLOCK_COLUMN, BLOCK_ROW):
            raise ValueError(f"unknown layout kind {kind!r}")
        if p < 1:
            raise ValueError("p must be at least 1")
        extent = num_cols if kind == BLOCK_COLUMN else num_rows
        axis = "columns" if kind == BLOCK_COLUMN else "rows"
        if p > extent:
            raise ValueError(f"p={p} exceeds the number of {axis} ({extent})")
        base, rem = divmod(extent, p)
        bounds = []
        start = 0
        for rank in range(p):
            size = base + (1 if rank < rem else 0)
            bounds.append((start, start + size))
            start += size
        return cls(kind, p, tuple(bounds))


class VirtualCluster:
    """Single-owner simulated cluster: a layout, the shared dataset, counters."""

    def __init__(self, dataset: LabeledDataset, layout: LayoutDescriptor):
        self.dataset = dataset
        self.layout = layout
        self.counters = CostCounters()

    @property
    def p(self) -> int:
        return self.layout.p

    def rank_range(self, rank: int) -> tuple[int, int]:
        return self.layout.boundaries[rank]

    def allreduce_sum(self, buffers: list[np.ndarray]) -> np.ndarray:
        """Elementwise sum of equal-length rank buffers, replicated on all ranks.

        Summation follows the fixed ascending-rank tree.  With p = 1 the
        input buffer is returned as-is (callers must treat it read-only).
        """
        p = self.p
        if len(buffers) != p:
            raise ValueError(f"expected {p} rank buffers, got {len(buffers)}")
        length = len(buffers[0])
        for buf in buffers[1:]:
            if len(buf) != length:
                raise ValueError("allreduce buffers must have equal length")
        c = self.counters
        c.words_moved += length
        c.messages += tree_message_count(p)
        c.collectives += 1
        if p == 1:
            return buffers[0]
        work = [np.array(buf, dtype=np.float64) for buf in buffers]
        step = 1
        while step < p:
            for rank in range(0, p - step, 2 * step):
                work[rank] += work[rank + step]
            step *= 2
        return work[0]

    def allgather(self, buffers: list[np.ndarray]) -> np.ndarray:
        """Rank-order concatenation replicated on all ranks; words = total length."""
        p = self.p
        if len(buffers) != p:
            raise ValueError(f"expected {p} rank buffers, got {len(buffers)}")
        c = self.counters
        c.words_moved += sum(len(buf) for buf in buffers)
        c.messages += tree_message_count(p)
        c.collectives += 1
        return np.concatenate(buffers)

    def record_flops(self, amount: int) -> None:
        self.counters.flops += int(amount)

    def record_sig(self, count: int) -> None:
        self.counters.sig_evals += int(count)

    # -- diagnostic views -------------------------------------------------

    def rank_view(self, rank: int) -> CsrMatrix:
        """The rank's slice of the scaled matrix, locally indexed (tests/diagnostics)."""
        A = self.dataset.a_tilde
        start, stop = self.rank_range(rank)
        if self.layout.kind == BLOCK_ROW:
            offsets = A.row_offsets[start : stop + 1]
            lo, hi = offsets[0], offsets[-1]
            return CsrMatrix(
                stop - start,
                A.num_cols,
                offsets - lo,
                A.col_indices[lo:hi],
                A.values[lo:hi],
            )
        offsets = [0]
        cols: list[np.ndarray] = []
        vals: list[np.ndarray] = []
        for i in range(A.num_rows):
            c, v = A.row(i)
            lo = int(np.searchsorted(c, start))
            hi = int(np.searchsorted(c, stop))
            cols.append(c[lo:hi] - start)
            vals.append(v[lo:hi])
            offsets.append(offsets[-1] + (hi - lo))
        return CsrMatrix(
            A.num_rows,
            stop - start,
            np.array(offsets),
            np.concatenate(cols) if cols else np.empty(0, dtype=np.int64),
            np.concatenate(vals) if vals else np.empty(0),
        )

    def reassemble(self) -> CsrMatrix:
        """Rebuild the full matrix from rank views; must equal the original exactly."""
        views = [self.rank_view(r) for r in range(self.p)]
        A = self.dataset.a_tilde
        if self.layout.kind == BLOCK_ROW:
            offsets = [0]
            cols = []
            vals = []
            for view in views:
                for i in range(view.num_rows):
                    c, v = view.row(i)
                    cols.append(c)
                    vals.append(v)
                    offsets.append(offsets[-1] + len(c))
            return CsrMatrix(
                A.num_rows,
                A.num_cols,
                np.array(offsets),
                np.concatenate(cols) if cols else np.empty(0, dtype=np.int64),
                np.concatenate(vals) if vals else np.empty(0),
            )
        offsets = [0]
        cols = []
        vals = []
        for i in range(A.num_rows):
            row_len = 0
            for rank, view in enumerate(views):
                start, _ = self.rank_range(rank)
                c, v = view.row(i)
                cols.append(c + start)
                vals.append(v)
                row_len += len(c)
            offsets.append(offsets[-1] + row_len)
        return CsrMatrix(
            A.num_rows,
            A.num_cols,
            np.array(offsets),
            np.concatenate(cols) if cols else np.empty(0, dtype=np.int64),
            np.concatenate(vals) if vals else np.empty(0),
        )


def partition(dataset: LabeledDataset, kind: str, p: int) -> VirtualCluster:
    """Distribute the dataset over p ranks in 1D-block column or row layout."""
    layout = LayoutDescriptor.build(kind, p, dataset.num_points, dataset.num_features)
    return VirtualCluster(dataset, layout)
