"""Multi-fidelity surrogates of time-series outputs.

Two predictors are built on an orthonormal output basis ``Gamma``:

* the projection model, where the first ``N`` basis coefficients of both
  codes are emulated by independent two-level co-kriging models, and
* the full model, which adds a separable-covariance GP for the part of the
  high-fidelity output orthogonal to ``span(Gamma_1..Gamma_N)``.

Under a Dirac basis law the predictive moments are plain recombinations of
the coefficient moments. Under an ensemble law (empirical or Haar) they are
obtained by the laws of total expectation and variance, with averages over
the ensemble members.

Array conventions: observation matrices are ``(N_t, n_points)`` (one column
per design point) while predictions are ``(m, N_t)`` (one row per
prediction point).
"""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor_gp
from .basis import (
    BasisDistribution,
    OrthonormalBasis,
    orthogonal_residual,
    project_coefficients,
    svd_dirac_basis,
)
from .cokriging import (
    CokrigingData,
    CokrigingModel,
    PriorSpec,
    Trends,
    _clip_variance,
    estimate_lengths,
    fit_cokriging,
    fit_level,
    predict_level_plugin,
)
from .design import Design, NestedDesignPair
from .kernels import NUGGET_START, corr_matrix, cross_corr, cross_corr_nugget

Z_95 = 1.96


# ------------------------------------------------------------------ data


@dataclass(frozen=True)
class MultiFidelityData:
    """Time-series observations of both codes on a nested design pair."""

    designs: NestedDesignPair
    Z_L: np.ndarray
    Z_H: np.ndarray
    times: np.ndarray | None = None

    def __post_init__(self):
        Z_L = np.atleast_2d(np.asarray(self.Z_L, dtype=float))
        Z_H = np.atleast_2d(np.asarray(self.Z_H, dtype=float))
        object.__setattr__(self, "Z_L", Z_L)
        object.__setattr__(self, "Z_H", Z_H)
        if Z_L.shape[1] != self.designs.low.n or Z_H.shape[1] != self.designs.high.n:
            raise ValueError("observation columns must match the design sizes")
        if Z_L.shape[0] != Z_H.shape[0]:
            raise ValueError("both codes must share the time grid")
        if self.times is None:
            object.__setattr__(self, "times", np.arange(Z_L.shape[0], dtype=float))
        elif np.shape(self.times) != (Z_L.shape[0],):
            raise ValueError("times must have one entry per row of the observations")
        if not (np.all(np.isfinite(Z_L)) and np.all(np.isfinite(Z_H))):
            raise ValueError("observations must be finite")

    @property
    def n_t(self) -> int:
        return self.Z_L.shape[0]

    @property
    def n_high(self) -> int:
        return self.designs.high.n

    @property
    def n_low(self) -> int:
        return self.designs.low.n

    def drop_high(self, idx) -> "MultiFidelityData":
        """Data without the high-fidelity points ``idx`` (low-fidelity data untouched)."""
        idx = np.atleast_1d(idx)
        keep = np.delete(np.arange(self.n_high), idx)
        dp = self.designs
        pair = NestedDesignPair(dp.low, dp.high.subset(keep), dp.inclusion_map[keep])
        return MultiFidelityData(pair, self.Z_L, self.Z_H[:, keep], self.times)

    def coefficients(self, gamma: np.ndarray, n: int):
        """Basis coefficients ``(alpha_L, alpha_H)`` of shapes ``(n, N_L)`` and ``(n, N_H)``."""
        return project_coefficients(self.Z_L, gamma, n), project_coefficients(self.Z_H, gamma, n)


@dataclass(frozen=True)
class Prediction:
    """Pointwise predictive moments, one row per prediction point."""

    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        if np.any(self.variance < 0):
            raise ValueError("predictive variances must be nonnegative")

    @property
    def intervals(self):
        """Approximate 95% bands ``mean -/+ 1.96 sqrt(var)``."""
        half = Z_95 * np.sqrt(self.variance)
        return self.mean - half, self.mean + half

    def point(self, j: int) -> "Prediction":
        return Prediction(self.mean[j : j + 1], self.variance[j : j + 1])


@dataclass(frozen=True)
class Hyperparameters:
    """Correlation lengths shared by all basis realizations.

    ``lengths_L[i]`` and ``lengths_H[i]`` belong to coefficient ``i``;
    ``residual[N]`` are the residual-GP lengths at truncation ``N``.
    """

    lengths_L: np.ndarray
    lengths_H: np.ndarray
    residual: dict = field(default_factory=dict)

    @property
    def n_max(self) -> int:
        return self.lengths_L.shape[0]

    def to_dict(self) -> dict:
        return {
            "d": self.lengths_L.shape[1],
            "lengths_L": self.lengths_L.tolist(),
            "lengths_H": self.lengths_H.tolist(),
            "residual": {str(k): np.asarray(v).tolist() for k, v in self.residual.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparameters":
        d_in = int(d["d"])
        return cls(
            np.array(d["lengths_L"], dtype=float).reshape(-1, d_in),
            np.array(d["lengths_H"], dtype=float).reshape(-1, d_in),
            {int(k): np.array(v) for k, v in d["residual"].items()},
        )


def _reference(dist: BasisDistribution) -> OrthonormalBasis:
    return dist.reference if dist.reference is not None else dist.members[0]


def _coef_data(data: MultiFidelityData, aL: np.ndarray, aH: np.ndarray, i: int) -> CokrigingData:
    return CokrigingData(data.designs, aL[i], aH[i])


def estimate_coefficient_lengths(
    data: MultiFidelityData, gamma: np.ndarray, n: int, trends: Trends | None = None
):
    """Maximum-likelihood lengths of both levels for coefficients ``0..n-1``."""
    d = data.designs.low.d
    aL, aH = data.coefficients(gamma, n)
    lengths_L = np.empty((n, d))
    lengths_H = np.empty((n, d))
    for i in range(n):
        cd = _coef_data(data, aL, aH, i)
        lengths_L[i] = estimate_lengths(cd, "L", trends)
        lengths_H[i] = estimate_lengths(cd, "H", trends)
    return lengths_L, lengths_H


def estimate_residual_lengths(
    data: MultiFidelityData, gamma: np.ndarray, n: int, mode: str = "simplified"
) -> np.ndarray:
    """LOO lengths of the residual GP fitted on the high-fidelity remainder at truncation ``n``."""
    aH = project_coefficients(data.Z_H, gamma, n)
    Z_perp = orthogonal_residual(data.Z_H, aH, gamma, n)
    return tensor_gp.optimize_lengths(Z_perp, data.designs.high.points, mode)


def estimate_hyperparameters(
    data: MultiFidelityData,
    basis_dist: BasisDistribution,
    n_max: int,
    residual_ns=(),
    trends: Trends | None = None,
) -> Hyperparameters:
    """Estimate lengths once on the reference (full-data) basis."""
    gamma = _reference(basis_dist).gamma
    lengths_L, lengths_H = estimate_coefficient_lengths(data, gamma, n_max, trends)
    residual = {int(n): estimate_residual_lengths(data, gamma, int(n)) for n in residual_ns}
    return Hyperparameters(lengths_L, lengths_H, residual)


# ------------------------------------------------------------------ models


@dataclass
class ProjectionSurrogate:
    """``N`` co-kriging models per basis realization.

    ``models[j][i]`` emulates coefficient ``i`` under ensemble member ``j``.
    """

    data: MultiFidelityData
    basis_dist: BasisDistribution
    N: int
    models: list
    hyper: Hyperparameters
    prior: PriorSpec

    @property
    def n_members(self) -> int:
        return self.basis_dist.n

    def coefficient_moments(self, X):
        """Posterior means and variances of all coefficients, each of shape ``(n_members, N, m)``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n, m = self.n_members, X.shape[0]
        E = np.zeros((n, self.N, m))
        V = np.zeros((n, self.N, m))
        for i in range(self.N):
            cross = None
            for j in range(n):
                model = self.models[j][i]
                if cross is None or not _shares_lengths(model, self.models[0][i]):
                    cross = model.cross(X)
                E[j, i], V[j, i] = model.predict_high(X, cross)
        return E, V

    def member_moments(self, X):
        """Conditional mean and variance given each basis realization, shape ``(m, N_t)``."""
        E, V = self.coefficient_moments(X)
        for j, member in enumerate(self.basis_dist.members):
            g = member.gamma[:, : self.N]
            yield E[j].T @ g.T, V[j].T @ (g * g).T


def _shares_lengths(a: CokrigingModel, b: CokrigingModel) -> bool:
    return a.low.corr is b.low.corr and a.high.corr is b.high.corr


@dataclass
class FullSurrogate:
    """Projection surrogate plus one residual GP per basis realization."""

    projection: ProjectionSurrogate
    residual_models: list
    residual_lengths: np.ndarray

    @property
    def N(self) -> int:
        return self.projection.N

    @property
    def basis_dist(self) -> BasisDistribution:
        return self.projection.basis_dist

    def member_moments(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        r = cross_corr(X, self.projection.data.designs.high.points, self.residual_lengths)
        for (P, S), gp in zip(self.projection.member_moments(X), self.residual_models):
            W, U = gp.predict_variance(X, r)
            yield P + W, S + U, P, W


def fit_projection(
    data: MultiFidelityData,
    basis_dist: BasisDistribution,
    N: int,
    hyper: Hyperparameters | None = None,
    prior: PriorSpec | None = None,
    trends: Trends | None = None,
    prior_overrides: dict | None = None,
    reestimate: bool = False,
    nugget: float = NUGGET_START,
) -> ProjectionSurrogate:
    """Fit ``N`` co-kriging models for every basis realization.

    Lengths come from ``hyper`` when given, otherwise they are estimated on
    the reference basis; with ``reestimate`` they are estimated again for
    every realization. Correlation factorizations are shared by all
    realizations whenever the lengths are.
    """
    if not 0 <= N <= min(data.n_low, data.n_t):
        raise ValueError(f"N={N} must lie in [0, min(N_L, N_t)]")
    prior = prior or PriorSpec()
    trends = trends or Trends()
    prior_overrides = prior_overrides or {}
    if hyper is None or hyper.n_max < N:
        ref = _reference(basis_dist).gamma
        lengths_L, lengths_H = estimate_coefficient_lengths(data, ref, N, trends)
        hyper = Hyperparameters(lengths_L, lengths_H, dict(hyper.residual) if hyper else {})
    low_pts, high_pts = data.designs.low.points, data.designs.high.points
    shared = [
        (corr_matrix(low_pts, hyper.lengths_L[i], nugget), corr_matrix(high_pts, hyper.lengths_H[i], nugget))
        for i in range(N)
    ]
    models = []
    for member in basis_dist.members:
        aL, aH = data.coefficients(member.gamma, N)
        row = []
        for i in range(N):
            cd = _coef_data(data, aL, aH, i)
            p = prior_overrides.get(i, prior)
            if reestimate:
                row.append(fit_cokriging(cd, p, trends=trends, nugget_L=nugget, nugget_H=nugget))
            else:
                cL, cH = shared[i]
                row.append(
                    fit_cokriging(cd, p, hyper.lengths_L[i], hyper.lengths_H[i], trends, cL, cH)
                )
        models.append(row)
    return ProjectionSurrogate(data, basis_dist, N, models, hyper, prior)


def fit_full(
    data: MultiFidelityData,
    basis_dist: BasisDistribution,
    N: int,
    hyper: Hyperparameters | None = None,
    prior: PriorSpec | None = None,
    trends: Trends | None = None,
    prior_overrides: dict | None = None,
    reestimate: bool = False,
    nugget: float = NUGGET_START,
    projection: ProjectionSurrogate | None = None,
) -> FullSurrogate:
    """Projection surrogate plus a residual GP on ``Z_H - Gamma_{1..N} alpha_H`` per realization.

    Residual lengths are taken from ``hyper.residual[N]`` or estimated by
    the simplified LOO criterion on the reference-basis residual.
    """
    if data.n_high < 3:
        raise ValueError("the residual GP needs at least 3 high-fidelity points")
    if projection is None:
        projection = fit_projection(
            data, basis_dist, N, hyper, prior, trends, prior_overrides, reestimate, nugget
        )
    hyper = projection.hyper
    if N in hyper.residual:
        res_lengths = np.asarray(hyper.residual[N], dtype=float)
    else:
        res_lengths = estimate_residual_lengths(data, _reference(basis_dist).gamma, N)
        hyper.residual[N] = res_lengths
    X_H = data.designs.high.points
    R_x = corr_matrix(X_H, res_lengths, nugget)
    gps = []
    for member in basis_dist.members:
        aH = project_coefficients(data.Z_H, member.gamma, N)
        Z_perp = orthogonal_residual(data.Z_H, aH, member.gamma, N)
        gps.append(tensor_gp.fit(Z_perp, X_H, res_lengths, R_x=R_x))
    return FullSurrogate(projection, gps, res_lengths)


# ------------------------------------------------------------------ predictors


def _require_single(model) -> None:
    if model.basis_dist.n != 1:
        raise ValueError("Dirac predictors need a single-member basis law")


def _scale_of(model) -> float:
    data = model.data if isinstance(model, ProjectionSurrogate) else model.projection.data
    return float(np.var(data.Z_H)) if data.Z_H.size else 1.0


def _finish(mean, var, scale) -> Prediction:
    return Prediction(mean, _clip_variance(var, scale))


class _Welford:
    """Streaming mean and population variance over ensemble members."""

    def __init__(self):
        self.k = 0
        self.mean = 0.0
        self.m2 = 0.0

    def add(self, x):
        self.k += 1
        delta = x - self.mean
        self.mean = self.mean + delta / self.k
        self.m2 = self.m2 + delta * (x - self.mean)

    @property
    def var(self):
        return self.m2 / self.k


def predict_projection_dirac(model: ProjectionSurrogate, X) -> Prediction:
    """Mean ``sum_i gamma_i E[A_i]`` and variance ``sum_i gamma_i^2 V[A_i]``."""
    _require_single(model)
    P, S = next(model.member_moments(X))
    return _finish(P, S, _scale_of(model))


def predict_projection_empirical(model: ProjectionSurrogate, X) -> Prediction:
    """Ensemble law: ``E[E[Z|G]]`` and ``E[V[Z|G]] + V[E[Z|G]]`` averaged over members."""
    mean, cond_var = _Welford(), _Welford()
    for P, S in model.member_moments(X):
        mean.add(P)
        cond_var.add(S)
    return _finish(mean.mean, cond_var.mean + mean.var, _scale_of(model))


def predict_full_dirac(model: FullSurrogate, X) -> Prediction:
    """Projection moments plus residual GP mean and variance ``R_star(x, x) R_t(t, t)``."""
    _require_single(model.projection)
    total, cond_var, _, _ = next(model.member_moments(X))
    return _finish(total, cond_var, _scale_of(model))


def predict_full_empirical(model: FullSurrogate, X) -> Prediction:
    """Ensemble-law moments of the full model.

    Given a realization the parallel and residual parts are uncorrelated,
    so the conditional variance is the sum of both; the variance of the
    conditional means collects the basis-induced terms, including the
    covariance between parallel and residual means.
    """
    mean, cond_var = _Welford(), _Welford()
    for total, S, _, _ in model.member_moments(X):
        mean.add(total)
        cond_var.add(S)
    return _finish(mean.mean, cond_var.mean + mean.var, _scale_of(model))


def predict(model, X, law: str | None = None) -> Prediction:
    """Dispatch on model type and basis law (``"dirac"`` for single members)."""
    if isinstance(model, SimpleFidelitySurrogate):
        return model.predict(X)
    if not isinstance(model, (FullSurrogate, ProjectionSurrogate)):
        raise TypeError(f"unsupported model type {type(model).__name__}")
    law = law or ("dirac" if model.basis_dist.n == 1 else "empirical")
    if isinstance(model, FullSurrogate):
        return predict_full_dirac(model, X) if law == "dirac" else predict_full_empirical(model, X)
    if law == "dirac":
        return predict_projection_dirac(model, X)
    return predict_projection_empirical(model, X)


def variance_terms(model: FullSurrogate, X) -> dict:
    """Individual terms of the ensemble-law variance of the full model.

    Keys: ``residual_mean_var`` (variance of residual means),
    ``residual_var_mean`` (mean residual variance), ``coef_mean_var``
    (sum over i of the variance of ``Gamma_i E[A_i]``), ``coef_var_mean``
    (sum over i of the mean of ``Gamma_i^2 V[A_i]``), ``coef_cross``
    (covariances between different coefficient terms) and
    ``parallel_residual_cross`` (twice the covariance between parallel and
    residual means). Their sum equals the predictive variance.
    """
    proj = model.projection
    X = np.atleast_2d(np.asarray(X, dtype=float))
    E, V = proj.coefficient_moments(X)
    r = cross_corr(X, proj.data.designs.high.points, model.residual_lengths)
    par, res, tot, res_var, coef_var = _Welford(), _Welford(), _Welford(), _Welford(), _Welford()
    per_index = [_Welford() for _ in range(proj.N)]
    for j, (member, gp) in enumerate(zip(proj.basis_dist.members, model.residual_models)):
        g = member.gamma[:, : proj.N]
        terms = E[j][:, :, None] * g.T[:, None, :]  # (N, m, N_t)
        for i in range(proj.N):
            per_index[i].add(terms[i])
        P = E[j].T @ g.T
        W, U = gp.predict_variance(X, r)
        par.add(P)
        res.add(W)
        tot.add(P + W)
        res_var.add(U)
        coef_var.add(V[j].T @ (g * g).T)
    coef_mean_var = sum((w.var for w in per_index), np.zeros_like(par.mean))
    return {
        "residual_mean_var": res.var,
        "residual_var_mean": res_var.mean,
        "coef_mean_var": coef_mean_var,
        "coef_var_mean": coef_var.mean,
        "coef_cross": par.var - coef_mean_var,
        "parallel_residual_cross": tot.var - par.var - res.var,
    }


# ------------------------------------------------------------------ single fidelity


@dataclass
class SimpleFidelitySurrogate:
    """High-fidelity-only reference: SVD of ``Z_H`` and one kriging model per coefficient."""

    basis: OrthonormalBasis
    N: int
    posteriors: list
    X_H: np.ndarray
    trends: Trends

    def predict(self, X) -> Prediction:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n_t = self.basis.n_t
        mean = np.zeros((X.shape[0], n_t))
        var = np.zeros((X.shape[0], n_t))
        for i, post in enumerate(self.posteriors):
            r = cross_corr_nugget(X, self.X_H, post.lengths, post.corr.nugget)
            mu, v = predict_level_plugin(post, self.trends.f_L(X), r)
            g = self.basis.gamma[:, i]
            mean += mu[:, None] * g[None, :]
            var += v[:, None] * (g * g)[None, :]
        return Prediction(mean, np.maximum(var, 0.0))


def fit_simple_fidelity(
    data: MultiFidelityData, N: int | None = None, prior: PriorSpec | None = None
) -> SimpleFidelitySurrogate:
    """Kriging of the leading ``N`` (default ``N_H``) SVD coefficients of the high-fidelity data."""
    prior = prior or PriorSpec()
    trends = Trends()
    basis = svd_dirac_basis(data.Z_H)
    N = data.n_high if N is None else N
    high = data.designs.high
    # a pair whose two levels are the high design: level "L" is then plain kriging of the H data
    pair = NestedDesignPair(high, high, np.arange(high.n))
    alpha = project_coefficients(data.Z_H, basis, N)
    posts = []
    for i in range(N):
        cd = CokrigingData(pair, alpha[i], alpha[i])
        ell = estimate_lengths(cd, "L", trends)
        posts.append(fit_level("L", cd, ell, prior, trends))
    return SimpleFidelitySurrogate(basis, N, posts, high.points, trends)


# ------------------------------------------------------------------ scores


def q2_timeseries(pred_means, truth) -> np.ndarray:
    """Per-time ``Q^2 = 1 - sum_k (pred - truth)^2 / sum_k (truth - mean_k truth)^2``.

    Inputs are ``(N_t, n_test)``. Entries with zero empirical variance are NaN.
    """
    pred = np.atleast_2d(np.asarray(pred_means, dtype=float))
    truth = np.atleast_2d(np.asarray(truth, dtype=float))
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {truth.shape}")
    sse = np.sum((pred - truth) ** 2, axis=1)
    sst = np.sum((truth - truth.mean(axis=1, keepdims=True)) ** 2, axis=1)
    out = np.full(truth.shape[0], np.nan)
    ok = sst > 0
    out[ok] = 1.0 - sse[ok] / sst[ok]
    return out


def coverage_timeseries(pred: Prediction, truth) -> np.ndarray:
    """Per-time fraction of test points inside the 95% bands; ``truth`` is ``(N_t, n_test)``."""
    lo, hi = pred.intervals
    T = np.asarray(truth, dtype=float).T
    return np.mean((T >= lo) & (T <= hi), axis=0)


# ------------------------------------------------------------------ dimension selection


@dataclass(frozen=True)
class DimensionSelection:
    N: int
    scores: np.ndarray  # time-averaged Q^2 for N = 0..N_max
    q2: np.ndarray  # (N_max + 1, N_t)
    hyper: Hyperparameters


def select_dimension(
    data: MultiFidelityData,
    basis_dist: BasisDistribution,
    N_max: int,
    method: str = "full",
    K: int | None = None,
    hyper: Hyperparameters | None = None,
    prior: PriorSpec | None = None,
    law: str | None = None,
    tie_tol: float = 1e-12,
) -> DimensionSelection:
    """Choose ``N`` maximizing the cross-validated, time-averaged ``Q^2``.

    The high-fidelity points are split into ``K`` folds (``K = N_H`` gives
    leave-one-out). Lengths are estimated once on the full data and kept
    fixed; posteriors are recomputed in every fold. Ties go to the
    smallest ``N``.
    """
    if method not in ("full", "projection"):
        raise ValueError("method must be 'full' or 'projection'")
    if not 0 <= N_max <= min(data.n_low, data.n_t):
        raise ValueError(f"N_max={N_max} must lie in [0, min(N_L, N_t)]")
    K = data.n_high if K is None else K
    if not 2 <= K <= data.n_high:
        raise ValueError(f"K={K} folds needs 2 <= K <= N_H={data.n_high}")
    ns = range(N_max + 1)
    if hyper is None or hyper.n_max < N_max:
        hyper = estimate_hyperparameters(
            data, basis_dist, N_max, ns if method == "full" else (), None
        )
    elif method == "full":
        ref = _reference(basis_dist).gamma
        for n in ns:
            if n not in hyper.residual:
                hyper.residual[n] = estimate_residual_lengths(data, ref, n)
    folds = np.array_split(np.arange(data.n_high), K)
    preds = np.zeros((N_max + 1, data.n_t, data.n_high))
    for idx in folds:
        train = data.drop_high(idx)
        X_out = data.designs.high.points[idx]
        proj = fit_projection(train, basis_dist, N_max, hyper, prior)
        for n in ns:
            sub = _truncate(proj, n)
            if method == "full":
                sub = fit_full(train, basis_dist, n, hyper, prior, projection=sub)
            p = predict(sub, X_out, law)
            preds[n][:, idx] = p.mean.T
    q2 = np.array([q2_timeseries(preds[n], data.Z_H) for n in ns])
    valid = np.all(np.isfinite(q2), axis=0)
    if not np.all(valid):
        warnings.warn(
            f"{np.sum(~valid)} time indices with zero empirical variance excluded from Q^2",
            RuntimeWarning,
            stacklevel=2,
        )
    if not np.any(valid):
        raise ValueError("high-fidelity outputs have zero variance at every time index")
    scores = q2[:, valid].mean(axis=1)
    best = int(np.flatnonzero(scores >= scores.max() - tie_tol)[0])
    return DimensionSelection(best, scores, q2, hyper)


def _truncate(proj: ProjectionSurrogate, n: int) -> ProjectionSurrogate:
    """The same fitted models restricted to the first ``n`` coefficients."""
    return ProjectionSurrogate(
        proj.data, proj.basis_dist, n, [row[:n] for row in proj.models], proj.hyper, proj.prior
    )


# ------------------------------------------------------------------ persistence


def write_prediction_csv(path, times, mean, var) -> None:
    """One test point: columns ``t, mean, var, lo95, hi95``."""
    mean = np.asarray(mean, dtype=float).ravel()
    var = np.asarray(var, dtype=float).ravel()
    half = Z_95 * np.sqrt(var)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "mean", "var", "lo95", "hi95"])
        for row in zip(times, mean, var, mean - half, mean + half):
            w.writerow([repr(float(v)) for v in row])


def save_surrogate(model, path) -> None:
    """Write a bundle: ``.npz`` matrices with an embedded JSON manifest.

    Loading refits the posteriors from the stored data and lengths.
    """
    full = isinstance(model, FullSurrogate)
    proj = model.projection if full else model
    data, dist = proj.data, proj.basis_dist
    manifest = {
        "type": "full" if full else "projection",
        "N": proj.N,
        "hyper": proj.hyper.to_dict(),
        "prior": proj.prior.to_dict(),
        "basis": {"kind": dist.kind, "k": dist.k, "seed": dist.seed, "n": dist.n},
        "seed": data.designs.low.seed,
    }
    arrays = {
        "low_points": data.designs.low.points,
        "high_points": data.designs.high.points,
        "bounds": data.designs.low.bounds,
        "inclusion_map": data.designs.inclusion_map,
        "Z_L": data.Z_L,
        "Z_H": data.Z_H,
        "times": data.times,
    }
    arrays.update({f"member_{j}": m.gamma for j, m in enumerate(dist.members)})
    if dist.reference is not None:
        arrays["reference"] = dist.reference.gamma
    np.savez_compressed(path, manifest=np.array(json.dumps(manifest)), **arrays)


def load_surrogate(path):
    with np.load(path) as blob:
        man = json.loads(str(blob["manifest"]))
        b = man["basis"]
        members = tuple(OrthonormalBasis(blob[f"member_{j}"]) for j in range(b["n"]))
        ref = OrthonormalBasis(blob["reference"]) if "reference" in blob else None
        bounds = blob["bounds"]
        low = Design(blob["low_points"], bounds, man.get("seed"))
        high = Design(blob["high_points"], bounds)
        pair = NestedDesignPair(low, high, blob["inclusion_map"])
        data = MultiFidelityData(pair, blob["Z_L"], blob["Z_H"], blob["times"])
    dist = BasisDistribution(b["kind"], members, b["k"], b["seed"], ref)
    hyper = Hyperparameters.from_dict(man["hyper"])
    prior = PriorSpec.from_dict(man["prior"])
    if man["type"] == "full":
        return fit_full(data, dist, man["N"], hyper, prior)
    return fit_projection(data, dist, man["N"], hyper, prior)
