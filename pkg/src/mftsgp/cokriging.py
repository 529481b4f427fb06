"""Two-level recursive (AR(1)) co-kriging with conjugate priors.

The high-fidelity output is modelled as ``rho(x) * A_L~(x) + delta(x)``
where ``A_L~`` is the low-fidelity Gaussian process conditioned on its
observations. With normal / inverse-gamma priors on the regression
parameters and variances, every level has a closed-form posterior and
the predictive mean and variance of ``A_H`` are explicit.

Regression parameters of the high level are ordered ``(beta_rho, beta_H)``,
matching the columns of ``H_H = [G_L * alpha_L(D_H), F_H]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from .design import Design, NestedDesignPair
from .kernels import NUGGET_START, CorrelationMatrix, corr_matrix, cross_corr_nugget
from .optim import OptimizationError, minimize_log_lengths

Trend = Callable[[np.ndarray], np.ndarray]


class RankError(np.linalg.LinAlgError):
    """``H^T C^{-1} H`` is singular: the regression functions are degenerate on the design."""


class InvalidPosteriorError(ValueError):
    pass


def constant_trend(points) -> np.ndarray:
    return np.ones((np.atleast_2d(points).shape[0], 1))


@dataclass(frozen=True)
class Trends:
    """Regression functions ``f_L``, ``f_H`` and ``g_L`` (adjustment ``rho``)."""

    f_L: Trend = constant_trend
    f_H: Trend = constant_trend
    g_L: Trend = constant_trend


@dataclass(frozen=True)
class PriorSpec:
    """Normal / inverse-gamma conjugate prior of both levels.

    ``V_*`` are scaled by the level variance: ``beta | sigma^2 ~ N(b, sigma^2 V)``
    and ``sigma^2 ~ IG(m, varsigma)``.
    """

    b_L: np.ndarray = field(default_factory=lambda: np.zeros(1))
    V_L: np.ndarray = field(default_factory=lambda: 2.0 * np.eye(1))
    m_L: float = 0.2
    varsigma_L: float = 1.5
    b_rho: np.ndarray = field(default_factory=lambda: np.ones(1))
    V_rho: np.ndarray = field(default_factory=lambda: 0.5 * np.eye(1))
    b_H: np.ndarray = field(default_factory=lambda: np.zeros(1))
    V_H: np.ndarray = field(default_factory=lambda: 2.0 * np.eye(1))
    m_H: float = 0.2
    varsigma_H: float = 1.5

    def __post_init__(self):
        for name in ("b_L", "b_rho", "b_H"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), float)))
        for name in ("V_L", "V_rho", "V_H"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), float)))
        for name in ("m_L", "m_H", "varsigma_L", "varsigma_H"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    def level(self, level: str):
        """Return ``(b, V, m, varsigma)`` for level ``"L"`` or ``"H"``."""
        if level == "L":
            return self.b_L, self.V_L, self.m_L, self.varsigma_L
        if level == "H":
            b = np.concatenate([self.b_rho, self.b_H])
            V = scipy.linalg.block_diag(self.V_rho, self.V_H)
            return b, V, self.m_H, self.varsigma_H
        raise ValueError(f"unknown level {level!r}")

    def to_dict(self) -> dict:
        return {k: np.asarray(v).tolist() for k, v in self.__dict__.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "PriorSpec":
        return cls(**d)


@dataclass(frozen=True)
class CokrigingData:
    """Scalar observations on a nested design pair."""

    designs: NestedDesignPair
    alpha_L: np.ndarray
    alpha_H: np.ndarray

    def __post_init__(self):
        aL = np.asarray(self.alpha_L, dtype=float).ravel()
        aH = np.asarray(self.alpha_H, dtype=float).ravel()
        object.__setattr__(self, "alpha_L", aL)
        object.__setattr__(self, "alpha_H", aH)
        if aL.shape[0] != self.designs.low.n or aH.shape[0] != self.designs.high.n:
            raise ValueError("data sizes do not match the designs")

    @property
    def alpha_L_at_high(self) -> np.ndarray:
        return self.alpha_L[self.designs.inclusion_map]

    def drop_high(self, k: int) -> "CokrigingData":
        return CokrigingData(self.designs.drop_high(k), self.alpha_L, np.delete(self.alpha_H, k))


@dataclass(frozen=True)
class LevelPosterior:
    """Conjugate posterior of one level.

    ``Sigma`` is the posterior covariance of the regression parameters
    evaluated at the posterior-mean variance ``sigma2 = Q / (2 (d - 1))``,
    and ``Sigma @ nu`` is their posterior mean.
    """

    level: str
    lengths: np.ndarray
    corr: CorrelationMatrix | None
    H: np.ndarray
    alpha: np.ndarray
    d: float
    Q: float
    Sigma: np.ndarray
    nu: np.ndarray
    lam_hat: np.ndarray | None

    @property
    def sigma2(self) -> float:
        return self.Q / (2.0 * (self.d - 1.0))

    @property
    def beta(self) -> np.ndarray:
        return self.Sigma @ self.nu

    @property
    def C_inv_factor(self) -> np.ndarray | None:
        return None if self.corr is None else self.corr.chol


def regression_matrix_high(data: CokrigingData, trends: Trends) -> np.ndarray:
    """``H_H = [G_L * alpha_L(D_H), F_H]`` (adjustment columns first)."""
    X = data.designs.high.points
    G = trends.g_L(X)
    return np.hstack([G * data.alpha_L_at_high[:, None], trends.f_H(X)])


def posterior(
    level: str,
    H: np.ndarray,
    alpha: np.ndarray,
    corr: CorrelationMatrix | None,
    lengths: np.ndarray,
    b: np.ndarray,
    V: np.ndarray,
    m: float,
    varsigma: float,
) -> LevelPosterior:
    """Closed-form conjugate posterior for ``alpha ~ N(H lam, sigma^2 C)``."""
    n = alpha.shape[0]
    d_post = n / 2.0 + m
    if d_post <= 1.0:
        raise InvalidPosteriorError(f"posterior shape d={d_post} must exceed 1")
    V_inv = np.linalg.inv(V)
    if n == 0:
        Q = float(varsigma)
        sigma2 = Q / (2.0 * (d_post - 1.0))
        return LevelPosterior(
            level, lengths, corr, H, alpha, d_post, Q, sigma2 * V, V_inv @ b / sigma2, None
        )
    CiH = corr.solve(H)
    Cia = corr.solve(alpha)
    HCH = H.T @ CiH
    HCH = 0.5 * (HCH + HCH.T)
    try:
        cfac = scipy.linalg.cho_factor(HCH)
    except np.linalg.LinAlgError as exc:
        raise RankError("H^T C^-1 H is singular; regression functions are degenerate") from exc
    if np.linalg.cond(HCH) > 1e14:
        raise RankError("H^T C^-1 H is numerically singular")
    lam_hat = scipy.linalg.cho_solve(cfac, H.T @ Cia)
    resid = alpha - H @ lam_hat
    Q_tilde = float(resid @ corr.solve(resid))
    HCH_inv = scipy.linalg.cho_solve(cfac, np.eye(H.shape[1]))
    db = b - lam_hat
    Q = Q_tilde + varsigma + float(db @ np.linalg.solve(V + HCH_inv, db))
    sigma2 = Q / (2.0 * (d_post - 1.0))
    precision = HCH + V_inv
    Sigma = sigma2 * np.linalg.inv(precision)
    Sigma = 0.5 * (Sigma + Sigma.T)
    nu = (H.T @ Cia + V_inv @ b) / sigma2
    return LevelPosterior(level, lengths, corr, H, alpha, d_post, Q, Sigma, nu, lam_hat)


def fit_level(
    level: str,
    data: CokrigingData,
    lengths,
    prior: PriorSpec | None = None,
    trends: Trends | None = None,
    corr: CorrelationMatrix | None = None,
    nugget: float = NUGGET_START,
) -> LevelPosterior:
    """Posterior of level ``"L"`` or ``"H"`` for fixed correlation lengths.

    ``corr`` may be passed to reuse an existing factorization of the level's
    correlation matrix (it must correspond to ``lengths`` and the level's design).
    """
    prior = prior or PriorSpec()
    trends = trends or Trends()
    lengths = np.asarray(lengths, dtype=float)
    if level == "L":
        X, alpha = data.designs.low.points, data.alpha_L
        H = trends.f_L(X)
    elif level == "H":
        X, alpha = data.designs.high.points, data.alpha_H
        H = regression_matrix_high(data, trends)
    else:
        raise ValueError(f"unknown level {level!r}")
    if corr is None and X.shape[0] > 0:
        corr = corr_matrix(X, lengths, nugget)
    b, V, m, s = prior.level(level)
    if H.shape[1] != b.shape[0]:
        raise ValueError(f"prior mean has size {b.shape[0]}, regression has {H.shape[1]} columns")
    return posterior(level, H, alpha, corr, lengths, b, V, m, s)


def _clip_variance(var, scale):
    var = np.asarray(var, dtype=float)
    tol = 1e-10 * max(1.0, float(scale))
    if np.any(var < -tol):
        raise InvalidPosteriorError(f"negative predictive variance {var.min():.3e}")
    return np.maximum(var, 0.0)


def predict_level_plugin(post: LevelPosterior, F_x: np.ndarray, r: np.ndarray, CiR=None):
    """Plug-in kriging mean/variance of a level at the posterior-mean parameters.

    ``F_x`` holds the regression functions at the prediction points and ``r``
    the cross-correlations with the level design, one row per point.
    ``CiR`` optionally caches ``C^{-1} r^T``.
    """
    beta = post.beta
    w = post.corr.solve(post.alpha - post.H @ beta)
    mean = F_x @ beta + r @ w
    if CiR is None:
        CiR = post.corr.solve(r.T)
    red = 1.0 + post.corr.nugget - np.einsum("ij,ji->i", r, CiR)
    var = post.sigma2 * red
    return mean, _clip_variance(var, post.sigma2)


@dataclass(frozen=True)
class CrossTerms:
    """Cross-correlations of prediction points with both designs and their solves.

    They depend only on the designs and lengths, so models that share both
    (e.g. the same coefficient index under different bases) can share them.
    """

    X: np.ndarray
    r_L: np.ndarray
    r_H: np.ndarray
    CiR_L: np.ndarray
    CiR_H: np.ndarray


@dataclass
class CokrigingModel:
    """Fitted two-level co-kriging model of one scalar output."""

    data: CokrigingData
    low: LevelPosterior
    high: LevelPosterior
    prior: PriorSpec
    trends: Trends = field(default_factory=Trends)

    @property
    def lengths_L(self) -> np.ndarray:
        return self.low.lengths

    @property
    def lengths_H(self) -> np.ndarray:
        return self.high.lengths

    @property
    def beta_rho(self) -> np.ndarray:
        q = self.prior.b_rho.shape[0]
        return self.high.beta[:q]

    def cross(self, X) -> CrossTerms:
        """Cross-correlation terms of points ``X`` with both designs."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        r_L = cross_corr_nugget(X, self.data.designs.low.points, self.lengths_L, self.low.corr.nugget)
        r_H = cross_corr_nugget(X, self.data.designs.high.points, self.lengths_H, self.high.corr.nugget)
        return CrossTerms(X, r_L, r_H, self.low.corr.solve(r_L.T), self.high.corr.solve(r_H.T))

    def predict_low(self, X, cross: CrossTerms | None = None):
        """Mean and variance of the conditioned low-fidelity process at rows of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if cross is None:
            r_L = cross_corr_nugget(X, self.data.designs.low.points, self.lengths_L, self.low.corr.nugget)
            return predict_level_plugin(self.low, self.trends.f_L(X), r_L)
        return predict_level_plugin(self.low, self.trends.f_L(X), cross.r_L, cross.CiR_L)

    def predict_high(self, X, cross: CrossTerms | None = None):
        """Posterior mean and variance of the high-fidelity output at rows of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        cross = self.cross(X) if cross is None else cross
        mu_L, var_L = self.predict_low(X, cross)
        hi = self.high
        if hi.d <= 1.0:
            raise InvalidPosteriorError("high-level posterior shape must exceed 1")
        q = self.prior.b_rho.shape[0]
        G = self.trends.g_L(X)
        h = np.hstack([G * mu_L[:, None], self.trends.f_H(X)])
        beta = hi.beta
        r_H, CiR = cross.r_H, cross.CiR_H
        mean = h @ beta + r_H @ hi.corr.solve(hi.alpha - hi.H @ beta)
        red = 1.0 + hi.corr.nugget - np.einsum("ij,ji->i", r_H, CiR)
        rho_hat = G @ beta[:q]
        eps_rho = np.einsum("ij,jk,ik->i", G, hi.Sigma[:q, :q], G)
        u = h - (hi.H.T @ CiR).T
        quad = np.einsum("ij,jk,ik->i", u, hi.Sigma, u)
        var = (rho_hat**2 + eps_rho) * var_L + hi.sigma2 * red + quad
        return mean, _clip_variance(var, hi.sigma2)

    def to_dict(self) -> dict:
        """JSON-serializable state; posteriors are recomputed by :meth:`from_dict`."""
        dp = self.data.designs
        return {
            "low_points": dp.low.points.tolist(),
            "low_bounds": dp.low.bounds.tolist(),
            "high_points": dp.high.points.tolist(),
            "inclusion_map": dp.inclusion_map.tolist(),
            "alpha_L": self.data.alpha_L.tolist(),
            "alpha_H": self.data.alpha_H.tolist(),
            "lengths_L": self.lengths_L.tolist(),
            "lengths_H": self.lengths_H.tolist(),
            "nugget_L": self.low.corr.nugget,
            "nugget_H": self.high.corr.nugget,
            "prior": self.prior.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CokrigingModel":
        low = Design(np.array(d["low_points"]), np.array(d["low_bounds"]))
        high = Design(np.array(d["high_points"]), np.array(d["low_bounds"]))
        data = CokrigingData(
            NestedDesignPair(low, high, np.array(d["inclusion_map"])),
            np.array(d["alpha_L"]),
            np.array(d["alpha_H"]),
        )
        return fit_cokriging(
            data,
            PriorSpec.from_dict(d["prior"]),
            lengths_L=d["lengths_L"],
            lengths_H=d["lengths_H"],
            nugget_L=d.get("nugget_L", NUGGET_START),
            nugget_H=d.get("nugget_H", NUGGET_START),
        )


def concentrated_neg_loglik(points, alpha, H, lengths, nugget: float = NUGGET_START) -> float:
    """Negative profile log-likelihood (trend and variance concentrated out), up to a constant."""
    corr = corr_matrix(points, lengths, nugget)
    n = alpha.shape[0]
    CiH = corr.solve(H)
    HCH = H.T @ CiH
    lam = np.linalg.solve(HCH, CiH.T @ alpha)
    resid = alpha - H @ lam
    q_tilde = float(resid @ corr.solve(resid))
    if not q_tilde > 0:
        return np.inf
    return 0.5 * n * np.log(q_tilde / n) + 0.5 * corr.logdet()


def estimate_lengths(
    data: CokrigingData,
    level: str,
    trends: Trends | None = None,
    start: float = 0.5,
    max_evals: int | None = None,
) -> np.ndarray:
    """Maximum-likelihood correlation lengths of one level via Nelder-Mead.

    Returns the start point when the data are exactly explained by the
    regression part (the likelihood is then flat in the lengths).
    """
    trends = trends or Trends()
    if level == "L":
        X, alpha = data.designs.low.points, data.alpha_L
        H = trends.f_L(X)
    elif level == "H":
        X, alpha = data.designs.high.points, data.alpha_H
        H = regression_matrix_high(data, trends)
    else:
        raise ValueError(f"unknown level {level!r}")
    n, d = X.shape
    if n < 3:
        raise ValueError("length estimation needs at least 3 points at the level")
    x0 = np.full(d, start)
    # flat likelihood: the trend reproduces the data exactly
    lam, *_ = np.linalg.lstsq(H, alpha, rcond=None)
    scale = max(float(alpha @ alpha), np.finfo(float).tiny)
    if float(np.sum((alpha - H @ lam) ** 2)) <= 1e-20 * scale:
        return x0

    def objective(ell):
        return concentrated_neg_loglik(X, alpha, H, ell)

    try:
        ell, _ = minimize_log_lengths(objective, d, start=x0, max_evals=max_evals)
    except OptimizationError:
        ell, _ = minimize_log_lengths(objective, d, start=np.full(d, 2.0), max_evals=max_evals)
    return ell


def fit_cokriging(
    data: CokrigingData,
    prior: PriorSpec | None = None,
    lengths_L=None,
    lengths_H=None,
    trends: Trends | None = None,
    corr_L: CorrelationMatrix | None = None,
    corr_H: CorrelationMatrix | None = None,
    nugget_L: float = NUGGET_START,
    nugget_H: float = NUGGET_START,
) -> CokrigingModel:
    """Fit both levels; lengths left as ``None`` are estimated by maximum likelihood."""
    prior = prior or PriorSpec()
    trends = trends or Trends()
    if lengths_L is None:
        lengths_L = estimate_lengths(data, "L", trends)
    if lengths_H is None:
        lengths_H = estimate_lengths(data, "H", trends)
    low = fit_level("L", data, lengths_L, prior, trends, corr_L, nugget_L)
    high = fit_level("H", data, lengths_H, prior, trends, corr_H, nugget_H)
    return CokrigingModel(data, low, high, prior, trends)


def predict_low(model: CokrigingModel, x):
    """Scalar-point convenience wrapper around :meth:`CokrigingModel.predict_low`."""
    m, v = model.predict_low(np.atleast_2d(x))
    return float(m[0]), float(v[0])


def predict_high(model: CokrigingModel, x):
    m, v = model.predict_high(np.atleast_2d(x))
    return float(m[0]), float(v[0])
