import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mftsgp.kernels import (
    NUGGET_MAX,
    ConditioningError,
    corr_matrix,
    corr_matrix_deriv,
    cross_corr,
    cross_corr_vector,
    factorize,
    matern52,
)

unit = st.floats(0.0, 1.0, allow_nan=False)
length = st.floats(0.05, 5.0, allow_nan=False)


def test_matern_zero_distance():
    assert matern52([0.3, 0.7], [0.3, 0.7], [0.1, 2.0]) == 1.0


def test_matern_closed_form_unit_distance():
    from mpmath import mp, mpf, exp, sqrt

    mp.dps = 30
    expected = float((1 + sqrt(5) + mpf(5) / 3) * exp(-sqrt(5)))
    assert matern52([0.0], [1.0], [1.0]) == pytest.approx(expected, rel=1e-14)
    assert expected == pytest.approx(0.5240, abs=1e-4)


def test_matern_long_lengths_tend_to_one():
    assert matern52([0.0, 0.0], [1.0, 1.0], [1e6, 1e6]) == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("bad", [[0.0], [-1.0], [np.inf], [np.nan]])
def test_matern_rejects_invalid_lengths(bad):
    with pytest.raises(ValueError):
        matern52([0.0], [1.0], bad)


@settings(max_examples=60, deadline=None)
@given(arrays(float, 3, elements=unit), arrays(float, 3, elements=unit), arrays(float, 3, elements=length))
def test_matern_symmetric_and_bounded(x, y, ell):
    v = matern52(x, y, ell)
    assert v == matern52(y, x, ell)
    assert 0.0 < v <= 1.0
    if np.any(x != y):
        assert v < 1.0 or np.max(np.abs(x - y) / ell) < 1e-7


def test_cross_corr_matches_pointwise():
    rng = np.random.default_rng(0)
    a, b, ell = rng.random((4, 3)), rng.random((5, 3)), np.array([0.3, 0.5, 1.2])
    R = cross_corr(a, b, ell)
    for i in range(4):
        for j in range(5):
            assert R[i, j] == pytest.approx(matern52(a[i], b[j], ell), rel=1e-13)


def test_cross_corr_vector_cases():
    rng = np.random.default_rng(1)
    pts = rng.random((6, 2))
    ell = [0.2, 0.2]
    assert cross_corr_vector(pts[3], pts, ell)[3] == pytest.approx(1.0)
    assert np.all(cross_corr_vector([50.0, 50.0], pts, ell) < 1e-3)
    assert cross_corr_vector([0.5, 0.5], np.zeros((0, 2)), ell).shape == (0,)


def test_corr_matrix_single_point():
    C = corr_matrix([[0.4, 0.1]], [0.5, 0.5], nugget=1e-8)
    np.testing.assert_allclose(C.values, [[1.0 + 1e-8]], rtol=0, atol=1e-15)


def test_identical_points_force_nugget():
    C = corr_matrix([[0.2], [0.2]], [0.5], nugget=0.0)
    assert C.nugget > 0.0
    assert np.linalg.eigvalsh(C.values).min() > 0


def test_nugget_ladder_gives_up():
    # an indefinite matrix cannot be rescued by a small jitter
    with pytest.raises(ConditioningError):
        factorize(np.array([[1.0, 2.0], [2.0, 1.0]]))
    assert NUGGET_MAX == 1e-4


def test_corr_matrix_positive_definite_on_random_sets():
    rng = np.random.default_rng(7)
    for _ in range(100):
        n, d = rng.integers(2, 15), rng.integers(1, 5)
        pts = rng.random((n, d))
        ell = rng.uniform(0.05, 2.0, d)
        C = corr_matrix(pts, ell, nugget=1e-8)
        assert np.allclose(C.values, C.values.T)
        assert np.linalg.eigvalsh(C.values).min() > 0


def test_corr_matrix_eigen_oracle():
    rng = np.random.default_rng(3)
    C = corr_matrix(rng.random((5, 2)), [0.4, 0.7], nugget=1e-8)
    assert np.linalg.eigvalsh(C.values).min() > 0
    np.testing.assert_allclose(C.chol @ C.chol.T, C.values, atol=1e-14)


def _fd_deriv(pts, ell, k, rel_step=1e-6):
    h = rel_step * ell[k]
    up, dn = ell.copy(), ell.copy()
    up[k] += h
    dn[k] -= h
    return (cross_corr(pts, pts, up) - cross_corr(pts, pts, dn)) / (2 * h)


def test_corr_deriv_matches_finite_differences():
    rng = np.random.default_rng(11)
    for _ in range(20):
        pts = rng.random((6, 3))
        ell = rng.uniform(0.1, 2.0, 3)
        for k in range(3):
            an = corr_matrix_deriv(pts, ell, k)
            fd = _fd_deriv(pts, ell, k)
            assert np.max(np.abs(an - fd)) / np.max(np.abs(an)) < 1e-5
            np.testing.assert_allclose(an, an.T, atol=0)
            assert np.all(np.diag(an) == 0.0)


def test_corr_deriv_zero_for_coincident_dimension():
    pts = np.array([[0.3, 0.1], [0.3, 0.5], [0.3, 0.9]])
    np.testing.assert_array_equal(corr_matrix_deriv(pts, [0.4, 0.4], 0), np.zeros((3, 3)))


def test_corr_deriv_index_checked():
    with pytest.raises(ValueError):
        corr_matrix_deriv(np.zeros((2, 2)), [1.0, 1.0], 2)
