import numpy as np
import pytest

from casgd import CsrMatrix, LabeledDataset


def dataset_from_scaled(dense_scaled, labels) -> LabeledDataset:
    """Dataset whose stored (label-scaled) matrix equals the given dense array."""
    return LabeledDataset.build(
        CsrMatrix.from_dense(np.asarray(dense_scaled, dtype=np.float64)),
        np.asarray(labels, dtype=np.float64),
    )


def random_dataset(rng: np.random.Generator, m: int, n: int, density: float = 0.3) -> LabeledDataset:
    dense = rng.standard_normal((m, n)) * (rng.random((m, n)) < density)
    labels = rng.choice([-1.0, 1.0], size=m)
    return dataset_from_scaled(dense, labels)


@pytest.fixture
def tiny() -> LabeledDataset:
    # Scaled matrix [[1, 0], [0, -2]] with labels (+1, -1): raw rows [[1,0],[0,2]].
    return dataset_from_scaled([[1.0, 0.0], [0.0, -2.0]], [1.0, -1.0])


def assert_datasets_equal(a: LabeledDataset, b: LabeledDataset) -> None:
    assert a.num_points == b.num_points
    assert a.num_features == b.num_features
    np.testing.assert_array_equal(a.labels, b.labels)
    np.testing.assert_array_equal(a.a_tilde.row_offsets, b.a_tilde.row_offsets)
    np.testing.assert_array_equal(a.a_tilde.col_indices, b.a_tilde.col_indices)
    np.testing.assert_array_equal(a.a_tilde.values, b.a_tilde.values)
