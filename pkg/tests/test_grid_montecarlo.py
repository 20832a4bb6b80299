import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stochdice import BrownianDriver, PathVector, TimeGrid, expectation, generate_increments, quantile


def test_uniform_grid():
    g = TimeGrid.uniform(500.0, 1.0)
    assert g.n_steps == 500 and len(g) == 501
    assert g.years[0] == 2015.0 and g.years[-1] == 2515.0
    assert g.is_uniform and g.horizon == 500.0
    assert g.index_of(100.0) == 100
    with pytest.raises(ValueError):
        g.index_of(100.5)
    with pytest.raises(ValueError):
        TimeGrid.uniform(10.0, 3.0)


def test_grid_validation_and_equality():
    with pytest.raises(ValueError):
        TimeGrid(np.array([0.0, 1.0, 1.0]))
    with pytest.raises(ValueError):
        TimeGrid(np.array([0.0]))
    a = TimeGrid(np.array([0.0, 1.0, 3.0]))
    assert a == TimeGrid(np.array([0.0, 1.0, 3.0]))
    assert hash(a) == hash(TimeGrid(np.array([0.0, 1.0, 3.0])))
    assert not a.is_uniform
    assert a.nearest_index(2.6) == 2


def test_path_vector_compression_and_ops():
    c = PathVector([2.0])
    assert c.is_deterministic and c.n_paths == 1
    v = PathVector([1.0, 2.0, 3.0])
    assert (v + c).expectation() == 4.0
    assert (3.0 - v).values.tolist() == [2.0, 1.0, 0.0]
    assert (v / 2).values.tolist() == [0.5, 1.0, 1.5]
    assert (-v).expectation() == -2.0
    assert v.expand(3).tolist() == [1.0, 2.0, 3.0]
    assert c.expand(4).tolist() == [2.0] * 4
    with pytest.raises(ValueError):
        v.expand(4)
    with pytest.raises(ValueError):
        PathVector([])
    with pytest.raises(ValueError):
        PathVector(np.zeros((2, 2)))


def test_quantile_and_expectation():
    x = np.arange(101.0)
    assert expectation(x) == 50.0
    assert quantile(x, 0.1) == pytest.approx(10.0)
    assert quantile(3.0, 0.5) == 3.0
    with pytest.raises(ValueError):
        quantile(x, 1.0)
    with pytest.raises(ValueError):
        expectation(np.array([]))
    assert PathVector(x).standard_error() == pytest.approx(np.std(x, ddof=1) / np.sqrt(101))


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50))
def test_expectation_within_range(values):
    m = expectation(values)
    assert min(values) - 1e-6 <= m <= max(values) + 1e-6


def test_increments_reproducible_and_scaled():
    grid = TimeGrid(np.array([0.0, 1.0, 5.0]))
    d = BrownianDriver(1, 50000, grid, 2)
    a, b = d.increments(), generate_increments(d)
    np.testing.assert_array_equal(a, b)
    assert a.shape == (2, 2, 50000)
    assert np.var(a[1, 0]) == pytest.approx(4.0, rel=0.03)
    assert not np.array_equal(a, BrownianDriver(2, 50000, grid, 2).increments())
    with pytest.raises(ValueError):
        BrownianDriver(1, 0, grid)
