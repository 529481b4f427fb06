"""Matérn-5/2 correlation functions and correlation matrices.

All inputs are expected in normalized ``[0, 1]^d`` coordinates; physical
bounds are handled by :mod:`mftsgp.design`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

SQRT5 = np.sqrt(5.0)

#: Jitter ladder used when a correlation matrix is not numerically positive definite.
NUGGET_START = 1e-8
NUGGET_MAX = 1e-4


class ConditioningError(np.linalg.LinAlgError):
    """Raised when a correlation matrix cannot be factorized even with the largest nugget."""


def check_lengths(lengths, d: int | None = None) -> np.ndarray:
    """Validate a vector of correlation lengths and return it as a float array."""
    ell = np.atleast_1d(np.asarray(lengths, dtype=float))
    if ell.ndim != 1:
        raise ValueError("correlation lengths must be a 1-d vector")
    if d is not None and ell.shape[0] != d:
        raise ValueError(f"expected {d} correlation lengths, got {ell.shape[0]}")
    if not np.all(np.isfinite(ell)) or np.any(ell <= 0.0):
        raise ValueError(f"correlation lengths must be positive and finite, got {ell}")
    return ell


def _matern52_profile(u):
    # h(u) = (1 + sqrt5 u + 5u^2/3) exp(-sqrt5 u), u >= 0
    su = SQRT5 * u
    return (1.0 + su + su * su / 3.0) * np.exp(-su)


def _matern52_profile_deriv(u):
    su = SQRT5 * u
    return -(5.0 / 3.0) * u * (1.0 + su) * np.exp(-su)


def _as_points(points, d: int | None = None) -> np.ndarray:
    p = np.asarray(points, dtype=float)
    if p.ndim == 1:
        p = p[None, :] if d is None or p.shape[0] == d else p[:, None]
    if p.ndim != 2:
        raise ValueError("points must be a 2-d array of shape (n, d)")
    return p


def matern52(x, xp, lengths) -> float:
    """Tensorized Matérn-5/2 correlation between two points.

    Parameters
    ----------
    x, xp : array_like, shape (d,)
        Points in normalized coordinates.
    lengths : array_like, shape (d,)
        Correlation lengths, one per dimension.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xp = np.atleast_1d(np.asarray(xp, dtype=float))
    ell = check_lengths(lengths, x.shape[0])
    u = np.abs(x - xp) / ell
    return float(np.prod(_matern52_profile(u)))


def cross_corr(xa, xb, lengths) -> np.ndarray:
    """Correlation matrix between two point sets, shape ``(len(xa), len(xb))``."""
    ell = check_lengths(lengths)
    d = ell.shape[0]
    a = _as_points(xa, d)
    b = _as_points(xb, d)
    if a.shape[1] != d or b.shape[1] != d:
        raise ValueError("point dimension does not match the number of lengths")
    # the exponential factors multiply into a single exp of the summed distances
    poly = np.ones((a.shape[0], b.shape[0]))
    total = np.zeros_like(poly)
    for k in range(d):
        su = (SQRT5 / ell[k]) * np.abs(a[:, k, None] - b[None, :, k])
        poly *= 1.0 + su + su * su / 3.0
        total += su
    return poly * np.exp(-total)


def cross_corr_nugget(xa, xb, lengths, nugget) -> np.ndarray:
    """Cross-correlations with the nugget added where points coincide exactly.

    Treating the nugget as a white-noise component of the kernel keeps
    predictions at design points equal to the observed values.
    """
    r = cross_corr(xa, xb, lengths)
    if nugget > 0.0 and r.size:
        d = check_lengths(lengths).shape[0]
        a = _as_points(xa, d)
        b = _as_points(xb, d)
        same = np.all(a[:, None, :] == b[None, :, :], axis=2)
        r = r + nugget * same
    return r


def cross_corr_vector(x, points, lengths) -> np.ndarray:
    """Vector of correlations between ``x`` and each row of ``points``."""
    ell = check_lengths(lengths)
    pts = np.asarray(points, dtype=float).reshape(-1, ell.shape[0])
    if pts.shape[0] == 0:
        return np.zeros(0)
    return cross_corr(np.atleast_1d(np.asarray(x, dtype=float))[None, :], pts, ell)[0]


@dataclass(frozen=True)
class CorrelationMatrix:
    """A nugget-stabilized correlation matrix with its lower Cholesky factor."""

    values: np.ndarray
    nugget: float
    chol: np.ndarray

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def solve(self, b) -> np.ndarray:
        """Return ``C^{-1} b`` using the stored factor."""
        return scipy.linalg.cho_solve((self.chol, True), b, check_finite=False)

    def inverse(self) -> np.ndarray:
        return self.solve(np.eye(self.n))

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.chol))))


def factorize(values: np.ndarray, nugget: float = NUGGET_START) -> CorrelationMatrix:
    """Cholesky-factorize ``values + nugget*I``, escalating the nugget on failure.

    The nugget is multiplied by 10 after each failure, starting from
    ``max(nugget, NUGGET_START)`` once the requested value has failed, until
    ``NUGGET_MAX`` is exceeded.
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    if n == 0:
        return CorrelationMatrix(values.reshape(0, 0), float(nugget), np.zeros((0, 0)))
    if not np.all(np.isfinite(values)):
        raise ConditioningError("correlation matrix has non-finite entries")
    eye = np.eye(n)
    tried = []
    nug = float(nugget)
    while True:
        tried.append(nug)
        try:
            chol = np.linalg.cholesky(values + nug * eye)
            if np.all(np.diag(chol) > 0.0):
                return CorrelationMatrix(values + nug * eye, nug, chol)
        except np.linalg.LinAlgError:
            pass
        nug = NUGGET_START if nug < NUGGET_START else nug * 10.0
        if nug > NUGGET_MAX * (1.0 + 1e-12):
            raise ConditioningError(
                f"Cholesky failed for nuggets {tried}; points are likely degenerate"
            )


def corr_matrix(points, lengths, nugget: float = NUGGET_START) -> CorrelationMatrix:
    """Correlation matrix of a point set with a nugget on the diagonal.

    Raises
    ------
    ConditioningError
        If the matrix stays non positive definite up to the nugget ``NUGGET_MAX``.
    """
    ell = check_lengths(lengths)
    pts = _as_points(points, ell.shape[0])
    if pts.shape[0] < 1:
        raise ValueError("need at least one point")
    if nugget < 0:
        raise ValueError("nugget must be nonnegative")
    return factorize(cross_corr(pts, pts, ell), nugget)


def corr_matrix_deriv(points, lengths, k: int) -> np.ndarray:
    """Entrywise derivative of the (nugget-free) correlation matrix w.r.t. ``lengths[k]``.

    ``k`` is a zero-based dimension index. Coincident coordinates in
    dimension ``k`` give a zero derivative.
    """
    ell = check_lengths(lengths)
    d = ell.shape[0]
    if not 0 <= k < d:
        raise ValueError(f"dimension index {k} out of range for d={d}")
    pts = _as_points(points, d)
    others = np.ones((pts.shape[0], pts.shape[0]))
    for j in range(d):
        if j == k:
            continue
        u = np.abs(pts[:, j, None] - pts[None, :, j]) / ell[j]
        others *= _matern52_profile(u)
    u = np.abs(pts[:, k, None] - pts[None, :, k]) / ell[k]
    # dh/dl = h'(u) * du/dl with du/dl = -u/l
    dk = _matern52_profile_deriv(u) * (-u / ell[k])
    return others * dk
