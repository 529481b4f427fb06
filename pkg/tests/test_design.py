import numpy as np
import pytest

from mftsgp.design import (
    Design,
    NestedDesignPair,
    lhs_bins_ok,
    maximin_lhs,
    min_distance,
    nest_designs,
    nested_maximin_designs,
    read_design_csv,
    uniform_test_set,
    write_design_csv,
)


def test_two_points_distinct_halves():
    pts = maximin_lhs(2, 1, seed=0).points.ravel()
    assert sorted(np.floor(pts * 2).astype(int).tolist()) == [0, 1]


def test_lhs_bins_and_reproducibility():
    a = maximin_lhs(10, 5, seed=4)
    b = maximin_lhs(10, 5, seed=4)
    np.testing.assert_array_equal(a.points, b.points)
    assert lhs_bins_ok(a.points)


def test_sweeps_never_decrease_min_distance():
    for seed in range(5):
        base = maximin_lhs(12, 3, seed=seed, sweeps=0)
        improved = maximin_lhs(12, 3, seed=seed, sweeps=100)
        assert min_distance(improved.points) >= min_distance(base.points)
        assert lhs_bins_ok(improved.points)


def test_maximin_rejects_small_n():
    with pytest.raises(ValueError):
        maximin_lhs(1, 2, seed=0)


def test_nest_designs_moves_nearest_points():
    low = Design(np.array([[0.1, 0.1], [0.9, 0.9], [0.5, 0.5], [0.2, 0.8]]))
    high = Design(np.array([[0.55, 0.45], [0.85, 0.95]]))
    pair = nest_designs(low, high)
    np.testing.assert_array_equal(pair.inclusion_map, [2, 1])
    np.testing.assert_array_equal(pair.low.points[[0, 3]], low.points[[0, 3]])
    np.testing.assert_array_equal(pair.low.points[pair.inclusion_map], high.points)


def test_nest_designs_ties_take_lowest_index():
    low = Design(np.array([[0.4], [0.6]]))
    high = Design(np.array([[0.5]]))
    assert nest_designs(low, high).inclusion_map.tolist() == [0]


def test_nest_designs_naive_oracle():
    rng = np.random.default_rng(2)
    low, high = Design(rng.random((30, 3))), Design(rng.random((6, 3)))
    pair = nest_designs(low, high)
    claimed = []
    for x in high.points:
        best, best_d = None, np.inf
        for i, p in enumerate(low.points):
            d = np.sqrt(np.sum((p - x) ** 2))
            if i not in claimed and d < best_d:
                best, best_d = i, d
        claimed.append(best)
    assert pair.inclusion_map.tolist() == claimed


def test_nest_dimension_mismatch():
    with pytest.raises(ValueError):
        nest_designs(Design(np.zeros((3, 2))), Design(np.zeros((1, 3))))


def test_pair_validates_inclusion():
    with pytest.raises(ValueError):
        NestedDesignPair(Design(np.array([[0.1], [0.2]])), Design(np.array([[0.3]])), np.array([0]))


def test_nested_maximin_pair_and_drop():
    pair = nested_maximin_designs(20, 5, 2, seed=1, sweeps=10)
    assert pair.low.n == 20 and pair.high.n == 5
    dropped = pair.drop_high(2)
    assert dropped.high.n == 4
    np.testing.assert_array_equal(dropped.low.points[dropped.inclusion_map], dropped.high.points)


def test_design_bounds_and_physical():
    d = uniform_test_set(50, 2, seed=0, bounds=[[10, 12], [1, 1.4]])
    phys = d.physical()
    assert phys[:, 0].min() >= 10 and phys[:, 0].max() <= 12
    with pytest.raises(ValueError):
        Design(np.array([[1.5]]))
    with pytest.raises(ValueError):
        Design(np.array([[0.5]]), bounds=[[1.0, 0.0]])


def test_csv_round_trip(tmp_path):
    d = maximin_lhs(7, 3, seed=9, bounds=[[0, 1], [2, 3], [-1, 1]])
    write_design_csv(d, tmp_path / "d.csv")
    back = read_design_csv(tmp_path / "d.csv")
    np.testing.assert_array_equal(back.points, d.points)
    np.testing.assert_array_equal(back.bounds, d.bounds)
    assert back.seed == 9
    assert (tmp_path / "d.csv").read_text().splitlines()[0] == "x1,x2,x3"
