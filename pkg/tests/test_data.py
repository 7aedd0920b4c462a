import numpy as np
import pytest

from hetknockoffs.data import (
    ColumnSchema,
    KnockoffMatrix,
    MixedDataset,
    Provenance,
    ResidualMatrix,
    numeric_schema,
    swap_columns,
    validate,
)
from hetknockoffs.errors import SchemaError


def mixed_dataset():
    schema = [
        ColumnSchema("a", "numeric"),
        ColumnSchema("b", "categorical", 2),
        ColumnSchema("c", "categorical", 3),
    ]
    values = np.array(
        [[0.5, 1, 3], [1.5, 2, 1], [-0.25, 1, 2], [3.0, 2, 2]], dtype=float
    )
    return MixedDataset(values, schema)


def test_validate_conforming_numeric():
    ds = MixedDataset(np.array([[1.0, 2.0], [3.0, 4.0]]), numeric_schema(["a", "b"]))
    assert validate(ds) == []


def test_validate_out_of_range_level():
    schema = [ColumnSchema("a", "numeric"), ColumnSchema("g", "categorical", 2)]
    ds = MixedDataset(np.array([[0.0, 1.0], [0.0, 3.0]]), schema)
    violations = validate(ds)
    assert len(violations) == 1
    assert (violations[0].row, violations[0].col) == (1, 1)


def test_validate_non_finite():
    ds = MixedDataset(np.array([[1.0, np.nan], [3.0, 4.0]]), numeric_schema(["a", "b"]))
    violations = validate(ds)
    assert len(violations) == 1
    assert (violations[0].row, violations[0].col) == (0, 1)


def test_validate_fractional_level_flagged():
    schema = [ColumnSchema("g", "categorical", 3), ColumnSchema("a", "numeric")]
    ds = MixedDataset(np.array([[1.5, 0.0], [2.0, 1.0]]), schema)
    assert len(validate(ds)) == 1


def test_schema_rejects_bad_kinds_and_levels():
    with pytest.raises(SchemaError):
        ColumnSchema("a", "wat")
    with pytest.raises(SchemaError):
        ColumnSchema("a", "categorical", 1)
    with pytest.raises(SchemaError):
        ColumnSchema("a", "categorical", 2, labels=("x",))
    with pytest.raises(SchemaError):
        ColumnSchema("a", "numeric", levels=2)


def test_dataset_shape_constraints():
    with pytest.raises(SchemaError):
        MixedDataset(np.zeros((1, 2)), numeric_schema(["a", "b"]))
    with pytest.raises(SchemaError):
        MixedDataset(np.zeros((3, 2)), numeric_schema(["a"]))
    with pytest.raises(SchemaError):
        MixedDataset(np.zeros((3, 2)), numeric_schema(["a", "a"]))


def test_values_are_immutable():
    ds = mixed_dataset()
    with pytest.raises(ValueError):
        ds.values[0, 0] = 99.0


def test_residual_matrix_enforces_zero_categorical():
    mask = np.array([False, True])
    ResidualMatrix(np.array([[0.5, 0.0], [1.0, 0.0]]), mask)
    with pytest.raises(SchemaError):
        ResidualMatrix(np.array([[0.5, 0.1], [1.0, 0.0]]), mask)


def knockoff_of(ds):
    return KnockoffMatrix(ds.values + 0.0, ds.schema, Provenance("test", 0))


def test_swap_empty_is_identity():
    ds = mixed_dataset()
    kt = knockoff_of(ds)
    xs, ks = swap_columns(ds, kt, [])
    assert np.array_equal(xs.values, ds.values)
    assert np.array_equal(ks.values, kt.values)


def test_swap_all_exchanges_everything():
    ds = mixed_dataset()
    kt = KnockoffMatrix(ds.values * 0 + np.arange(1, 4), ds.schema, Provenance("t", 0))
    xs, ks = swap_columns(ds, kt, range(ds.p))
    assert np.array_equal(xs.values, kt.values)
    assert np.array_equal(ks.values, ds.values)


def test_swap_is_involution():
    rng = np.random.default_rng(0)
    ds = mixed_dataset()
    kt = KnockoffMatrix(
        np.column_stack([rng.standard_normal(4), rng.integers(1, 3, 4), rng.integers(1, 4, 4)]),
        ds.schema,
        Provenance("t", 0),
    )
    for _ in range(20):
        S = [j for j in range(ds.p) if rng.random() < 0.5]
        xs, ks = swap_columns(ds, kt, S)
        xs2, ks2 = swap_columns(xs, ks, S)
        assert np.array_equal(xs2.values, ds.values)
        assert np.array_equal(ks2.values, kt.values)


def test_swap_index_out_of_range():
    ds = mixed_dataset()
    kt = knockoff_of(ds)
    with pytest.raises(IndexError):
        swap_columns(ds, kt, [ds.p])


def test_swap_requires_shared_schema():
    ds = mixed_dataset()
    other = MixedDataset(np.zeros((4, 2)), numeric_schema(["a", "b"]))
    kt = KnockoffMatrix(other.values, other.schema, Provenance("t", 0))
    with pytest.raises(SchemaError):
        swap_columns(ds, kt, [0])
