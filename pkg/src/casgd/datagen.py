"""Reproducible synthetic classification datasets.

Every row carries exactly ``nnz_per_row`` nonzeros so the per-batch
nonzero count is uniform, which is what makes measured communication
volumes match the closed-form cost expressions exactly.  Labels come
from a planted hyperplane with optional flip noise.
"""

from __future__ import annotations

import numpy as np

from .sparse import CsrMatrix, LabeledDataset

__all__ = ["synthetic_dataset"]


def synthetic_dataset(
    m: int,
    n: int,
    nnz_per_row: int,
    seed: int = 0,
    feature_values: str = "gaussian",
    label_noise: float = 0.0,
) -> LabeledDataset:
    """Random dataset with exactly ``nnz_per_row`` stored entries per row.

    ``feature_values`` is ``"gaussian"`` or ``"binary"`` (all-ones, in the
    style of one-hot encoded categorical data).  ``label_noise`` flips
    that fraction of planted labels.
    """
    if not 1 <= nnz_per_row <= n:
        raise ValueError("nnz_per_row must be in [1, n]")
    rng = np.random.default_rng(seed)
    cols = np.empty((m, nnz_per_row), dtype=np.int64)
    for i in range(m):
        cols[i] = np.sort(rng.choice(n, size=nnz_per_row, replace=False))
    if feature_values == "gaussian":
        vals = rng.standard_normal((m, nnz_per_row))
    elif feature_values == "binary":
        vals = np.ones((m, nnz_per_row))
    else:
        raise ValueError(f"unknown feature_values {feature_values!r}")

    x_star = rng.standard_normal(n)
    scores = np.einsum("ij,ij->i", vals, x_star[cols])
    labels = np.where(scores >= 0.0, 1.0, -1.0)
    if label_noise > 0.0:
        flip = rng.random(m) < label_noise
        labels[flip] = -labels[flip]

    offsets = np.arange(0, (m + 1) * nnz_per_row, nnz_per_row, dtype=np.int64)
    matrix = CsrMatrix(m, n, offsets, cols.ravel(), (vals * labels[:, None]).ravel())
    return LabeledDataset.build(matrix, labels)
