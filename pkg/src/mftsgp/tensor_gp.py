"""Kriging of time-series outputs with a separable covariance ``R_t (x) R_x``.

The time covariance is estimated in closed form from the observations and
is never inverted on the prediction path; only the ``N_x x N_x`` spatial
correlation matrix is factorized. Correlation lengths are chosen by
leave-one-out (LOO) cross validation, either with an explicit hold-one-out
loop, with the fast spatial-only criterion, or with the Tikhonov-regularized
full criterion.

Observation vectors are ordered time-major, ``z[u * N_x + j] = Z[u, j]``,
which is the ordering under which the joint covariance is ``R_t (x) R_x``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .cokriging import RankError, constant_trend
from .kernels import NUGGET_START, CorrelationMatrix, corr_matrix, corr_matrix_deriv, cross_corr_nugget
from .optim import minimize_log_lengths

logger = logging.getLogger(__name__)

LOO_MODES = ("simplified", "loop", "full_regularized")


@dataclass(frozen=True)
class LooObjective:
    mode: str = "simplified"
    eps_reg: float | None = None

    def __post_init__(self):
        if self.mode not in LOO_MODES:
            raise ValueError(f"unknown LOO mode {self.mode!r}; expected one of {LOO_MODES}")
        if self.eps_reg is not None and not self.eps_reg > 0:
            raise ValueError("eps_reg must be positive")


@dataclass
class TensorGPModel:
    """Fitted separable-covariance GP.

    ``Z_obs`` has shape ``(N_t, N_x)``, one column per design point.
    """

    Z_obs: np.ndarray
    X: np.ndarray
    lengths: np.ndarray
    R_x: CorrelationMatrix
    R_t_hat: np.ndarray
    B_star: np.ndarray
    F: np.ndarray
    trend: Callable[[np.ndarray], np.ndarray]
    _W: np.ndarray  # Z_obs R_x^{-1}
    _FRF_inv: np.ndarray  # (F^T R_x^{-1} F)^{-1}

    @property
    def n_t(self) -> int:
        return self.Z_obs.shape[0]

    def predict(self, X, r: np.ndarray | None = None):
        """Posterior mean (rows of shape ``N_t``) and covariance scale ``R_star(x, x)``.

        The predictive covariance of the output vector at ``x`` is
        ``scale(x) * R_t_hat``.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        tau = self.R_x.nugget
        if r is None:
            r = cross_corr_nugget(X, self.X, self.lengths, tau)
        else:
            # callers share the plain cross-correlations across models
            r = r + tau * np.all(X[:, None, :] == self.X[None, :, :], axis=2)
        Rir = self.R_x.solve(r.T)  # (N_x, m)
        u = self.trend(X) - (self.F.T @ Rir).T  # (m, M)
        mean = (self._W @ r.T).T + u @ self.B_star.T
        c_star = 1.0 + tau - np.einsum("ij,ji->i", r, Rir)
        # c*(1 + v*) with v* = u^T (F^T R^-1 F)^-1 u / c*; written without the division
        scale = c_star + np.einsum("ij,jk,ik->i", u, self._FRF_inv, u)
        if np.any(scale < -1e-10):
            raise FloatingPointError(f"negative posterior scale {scale.min():.3e}")
        return mean, np.maximum(scale, 0.0)

    def predict_variance(self, X, r: np.ndarray | None = None):
        """Mean and pointwise variance ``scale * diag(R_t_hat)``."""
        mean, scale = self.predict(X, r)
        return mean, scale[:, None] * np.diag(self.R_t_hat)[None, :]


def estimate_time_covariance(Z_obs: np.ndarray, R_x: CorrelationMatrix) -> np.ndarray:
    """Maximum-likelihood time covariance from row-centred observations."""
    n_x = Z_obs.shape[1]
    D = Z_obs - Z_obs.mean(axis=1, keepdims=True)
    Rt = D @ R_x.solve(D.T) / n_x
    return 0.5 * (Rt + Rt.T)


def fit(
    Z_obs,
    X,
    lengths,
    trend: Callable[[np.ndarray], np.ndarray] = constant_trend,
    nugget: float = NUGGET_START,
    R_x: CorrelationMatrix | None = None,
) -> TensorGPModel:
    """Fit the separable GP for fixed spatial correlation lengths."""
    Z = np.atleast_2d(np.asarray(Z_obs, dtype=float))
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if Z.shape[1] != X.shape[0]:
        raise ValueError(f"Z_obs has {Z.shape[1]} columns but there are {X.shape[0]} points")
    if X.shape[0] < 2:
        raise ValueError("tensorized GP needs at least 2 design points")
    lengths = np.asarray(lengths, dtype=float)
    if R_x is None:
        R_x = corr_matrix(X, lengths, nugget)
    F = trend(X)
    RiF = R_x.solve(F)
    FRF = F.T @ RiF
    try:
        FRF_inv = np.linalg.inv(FRF)
    except np.linalg.LinAlgError as exc:
        raise RankError("F^T R_x^-1 F is singular") from exc
    if not np.all(np.isfinite(FRF_inv)) or np.linalg.cond(FRF) > 1e14:
        raise RankError("F^T R_x^-1 F is numerically singular")
    W = R_x.solve(Z.T).T
    B_star = W @ F @ FRF_inv
    return TensorGPModel(
        Z, X, lengths, R_x, estimate_time_covariance(Z, R_x), B_star, F, trend, W, FRF_inv
    )


def predict(model: TensorGPModel, x):
    """Single-point prediction: ``(mean, scale, R_t_hat)``."""
    mean, scale = model.predict(np.atleast_2d(x))
    return mean[0], float(scale[0]), model.R_t_hat


# ---------------------------------------------------------------- LOO criteria


def loo_error_loop(Z_obs, X, lengths, trend=constant_trend, nugget: float = NUGGET_START) -> float:
    """Sum over design points of the squared hold-one-out prediction error.

    The per-column errors come from the closed-form LOO residuals of
    :func:`loo_residuals_virtual` (same lengths, trend re-estimated in
    every fold), so no model is refitted.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] < 3:
        raise ValueError("LOO needs at least 3 design points")
    E = loo_residuals_virtual(Z_obs, X, lengths, trend, nugget)
    return float(np.sum(E * E))


def loo_residuals_virtual(Z_obs, X, lengths, trend=constant_trend, nugget: float = NUGGET_START):
    """Closed-form LOO residuals (prediction minus observation) of every column.

    Uses the inverse of the bordered matrix ``[[R_x, F], [F^T, 0]]`` so that
    the trend is re-estimated in every fold, as in :func:`loo_error_loop`.
    """
    Z = np.atleast_2d(np.asarray(Z_obs, dtype=float))
    X = np.atleast_2d(np.asarray(X, dtype=float))
    R = corr_matrix(X, lengths, nugget)
    F = trend(X)
    n, M = F.shape
    K = np.block([[R.values, F], [F.T, np.zeros((M, M))]])
    Ki = np.linalg.inv(K)[:n, :n]
    # LOO residual y_k - yhat_k = (Ki y)_k / Ki_kk
    return -(Z @ Ki) / np.diag(Ki)[None, :]


def _precision_weights(R: CorrelationMatrix):
    Ri = R.inverse()
    Ri = 0.5 * (Ri + Ri.T)
    return Ri, np.diag(Ri)


def loo_fcv_simplified(Z_obs, X, lengths, nugget: float = NUGGET_START) -> float:
    """Spatial-only LOO criterion ``z^T [I (x) R^-1 diag(R^-1)^-2 R^-1] z``.

    Evaluated row by row (one row of ``Z_obs`` per time index).
    """
    Z = np.atleast_2d(np.asarray(Z_obs, dtype=float))
    if np.atleast_2d(X).shape[0] < 2:
        raise ValueError("LOO needs at least 2 design points")
    R = corr_matrix(X, lengths, nugget)
    Ri, dg = _precision_weights(R)
    E = (Z @ Ri) / dg[None, :]
    return float(np.sum(E * E))


def loo_fcv_gradient(Z_obs, X, lengths, nugget: float = NUGGET_START) -> np.ndarray:
    """Analytic gradient of :func:`loo_fcv_simplified` w.r.t. the lengths.

    With ``P = R^-1``, ``D = diag(P)``, ``A = Z P`` and ``E = A D^-1``,
    ``df = 2 sum(E * A D^-2 diag(P R' P)) - 2 sum(E D^-1 * A R' P)``.
    """
    Z = np.atleast_2d(np.asarray(Z_obs, dtype=float))
    X = np.atleast_2d(np.asarray(X, dtype=float))
    lengths = np.asarray(lengths, dtype=float)
    R = corr_matrix(X, lengths, nugget)
    P, dg = _precision_weights(R)
    A = Z @ P
    E = A / dg[None, :]
    ED = E / dg[None, :]
    grad = np.empty(lengths.shape[0])
    for k in range(lengths.shape[0]):
        dR = corr_matrix_deriv(X, lengths, k)
        PdRP = P @ dR @ P
        d_diag = np.diag(PdRP)
        term1 = np.sum(ED * A * (d_diag / dg)[None, :])
        term2 = np.sum(ED * (A @ dR @ P))
        grad[k] = 2.0 * term1 - 2.0 * term2
    return grad


def regularized_inverse(R_t: np.ndarray, eps: float) -> np.ndarray:
    """Tikhonov pseudo-inverse ``(R^T R + eps I)^-1 R``."""
    n = R_t.shape[0]
    return np.linalg.solve(R_t.T @ R_t + eps * np.eye(n), R_t)


def loo_weight(Ri: np.ndarray, rel_tol: float = 1e-12) -> np.ndarray:
    """``Ri diag(Ri)^-2 Ri``; indices whose diagonal vanishes are dropped."""
    dg = np.diag(Ri).copy()
    keep = np.abs(dg) > rel_tol * max(np.abs(dg).max(), np.finfo(float).tiny)
    W = np.zeros_like(Ri)
    Rk = Ri[:, keep]
    W += (Rk / dg[keep] ** 2) @ Ri[keep, :]
    return W


def kron_quadratic_form(A_t: np.ndarray, A_x: np.ndarray, Z: np.ndarray) -> float:
    """``z^T (A_t (x) A_x) z`` for time-major ``z = vec(Z^T)``, without the Kronecker product."""
    return float(np.sum(A_t * (Z @ A_x @ Z.T)))


def default_eps(R_t: np.ndarray) -> float:
    return 1e-8 * float(np.trace(R_t)) / R_t.shape[0]


def loo_fcv_full_regularized(
    Z_obs, X, lengths, eps: float | None = None, R_t=None, nugget: float = NUGGET_START
) -> float:
    """Full separable LOO criterion with a Tikhonov-regularized inverse of ``R_t``.

    ``R_t`` defaults to the estimate from the data at these lengths.
    """
    Z = np.atleast_2d(np.asarray(Z_obs, dtype=float))
    R = corr_matrix(X, lengths, nugget)
    if R_t is None:
        R_t = estimate_time_covariance(Z, R)
    R_t = np.asarray(R_t, dtype=float)
    if eps is None:
        eps = default_eps(R_t)
    if not eps > 0:
        raise ValueError("regularization eps must be positive")
    Ri_x, _ = _precision_weights(R)
    return kron_quadratic_form(loo_weight(regularized_inverse(R_t, eps)), loo_weight(Ri_x), Z)


def loo_objective(Z_obs, X, lengths, mode: LooObjective | str = "simplified") -> float:
    mode = LooObjective(mode) if isinstance(mode, str) else mode
    if mode.mode == "simplified":
        return loo_fcv_simplified(Z_obs, X, lengths)
    if mode.mode == "loop":
        return loo_error_loop(Z_obs, X, lengths)
    return loo_fcv_full_regularized(Z_obs, X, lengths, mode.eps_reg)


def optimize_lengths(
    Z_obs, X, mode: LooObjective | str = "simplified", start: float = 0.5, max_evals=None
) -> np.ndarray:
    """Nelder-Mead minimization of a LOO criterion over log-lengths from ``start``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    mode = LooObjective(mode) if isinstance(mode, str) else mode
    ell, val = minimize_log_lengths(
        lambda ell: loo_objective(Z_obs, X, ell, mode), X.shape[1], start=start, max_evals=max_evals
    )
    logger.debug("LOO %s optimum %.6g at %s", mode.mode, val, ell)
    return ell


def fit_with_loo(Z_obs, X, mode: LooObjective | str = "simplified", **kw) -> TensorGPModel:
    return fit(Z_obs, X, optimize_lengths(Z_obs, X, mode), **kw)
