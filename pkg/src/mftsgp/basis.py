"""Orthonormal output bases, their laws, projections and residuals."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

ORTHO_TOL = 1e-10


@dataclass(frozen=True)
class OrthonormalBasis:
    """An ``N_t x N_t`` orthogonal matrix whose columns are the basis vectors."""

    gamma: np.ndarray
    singular_values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        g = np.atleast_2d(np.asarray(self.gamma, dtype=float))
        object.__setattr__(self, "gamma", g)
        if g.shape[0] != g.shape[1]:
            raise ValueError("basis matrix must be square")
        err = np.abs(g.T @ g - np.eye(g.shape[0])).max()
        if err > ORTHO_TOL:
            raise ValueError(f"basis is not orthonormal (max deviation {err:.2e})")

    @property
    def n_t(self) -> int:
        return self.gamma.shape[0]

    def leading(self, n: int) -> np.ndarray:
        return self.gamma[:, :n]


@dataclass(frozen=True)
class BasisDistribution:
    """Law of the random basis: a single matrix (Dirac) or a uniform ensemble.

    Haar draws are represented as an ensemble of sampled matrices.
    ``members[0]`` is the Dirac matrix for ``kind == "dirac"``.
    """

    kind: str
    members: tuple
    k: int | None = None
    seed: int | None = None
    reference: OrthonormalBasis | None = None

    def __post_init__(self):
        if self.kind not in ("dirac", "empirical", "haar"):
            raise ValueError(f"unknown basis law {self.kind!r}")
        if len(self.members) == 0:
            raise ValueError("a basis distribution needs at least one member")
        if self.kind == "dirac" and len(self.members) != 1:
            raise ValueError("a Dirac law has exactly one member")

    @property
    def n(self) -> int:
        return len(self.members)

    @classmethod
    def dirac(cls, basis: OrthonormalBasis) -> "BasisDistribution":
        return cls("dirac", (basis,), reference=basis)

    def expectation(self, func):
        """Uniform ensemble average of ``func(member.gamma)``."""
        vals = [np.asarray(func(m.gamma), dtype=float) for m in self.members]
        return np.mean(vals, axis=0)


def _sign_fix(U: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs


def complete_basis(U_r: np.ndarray) -> np.ndarray:
    """Extend orthonormal columns ``U_r`` to a full orthogonal matrix.

    The complement is obtained by Gram-Schmidt (QR) on ``[U_r, I]``; the
    leading columns are kept verbatim.
    """
    n_t, r = U_r.shape
    if r == n_t:
        return U_r.copy()
    Q, _ = scipy.linalg.qr(np.hstack([U_r, np.eye(n_t)]), mode="economic")
    comp = Q[:, r:n_t]
    # re-orthogonalize once against U_r to clear round-off
    comp = comp - U_r @ (U_r.T @ comp)
    comp, _ = np.linalg.qr(comp)
    return np.hstack([U_r, _sign_fix(comp)])


def svd_dirac_basis(Z_obs, rank_tol: float = 1e-12) -> OrthonormalBasis:
    """Left singular vectors of ``Z_obs`` completed to a full orthonormal basis.

    Columns are ordered by decreasing singular value and signed so that
    each column's largest-magnitude entry is positive.
    """
    Z = np.atleast_2d(np.asarray(Z_obs, dtype=float))
    if Z.shape[1] < 1:
        raise ValueError("need at least one observation column")
    U, s, _ = np.linalg.svd(Z, full_matrices=False)
    if s.size == 0 or s[0] == 0.0 or not np.isfinite(s[0]):
        raise ValueError("observation matrix is zero or non-finite; SVD basis is undefined")
    r = int(np.sum(s > rank_tol * s[0]))
    U_r = _sign_fix(U[:, :r])
    return OrthonormalBasis(complete_basis(U_r), s[:r])


def haar_sample(n_t: int, seed=None) -> OrthonormalBasis:
    """Haar-distributed orthogonal matrix by QR of a Gaussian matrix (positive-diagonal R)."""
    if n_t < 1:
        raise ValueError("n_t must be positive")
    rng = np.random.default_rng(seed)
    while True:
        G = rng.standard_normal((n_t, n_t))
        Q, R = np.linalg.qr(G)
        dg = np.diag(R)
        if np.min(np.abs(dg)) > 1e-10 * np.max(np.abs(dg)):
            break
    return OrthonormalBasis(Q * np.sign(dg)[None, :])


def haar_distribution(n_t: int, n: int, seed=None) -> BasisDistribution:
    seeds = np.random.SeedSequence(seed).spawn(n)
    return BasisDistribution("haar", tuple(haar_sample(n_t, s) for s in seeds), seed=seed)


def align_signs(member: OrthonormalBasis, reference: OrthonormalBasis, n_cols: int) -> OrthonormalBasis:
    """Flip leading columns whose inner product with the reference column is negative."""
    g = member.gamma.copy()
    dots = np.einsum("ij,ij->j", g[:, :n_cols], reference.gamma[:, :n_cols])
    g[:, :n_cols] *= np.where(dots < 0, -1.0, 1.0)[None, :]
    return OrthonormalBasis(g, member.singular_values)


def _check_gaps(s: np.ndarray, n_check: int = 10, rel: float = 1e-6) -> None:
    s = s[:n_check]
    # values at round-off level carry no direction and are never used
    s = s[s > 1e-10 * s[0]] if s.size else s
    if s.size < 2:
        return
    gaps = (s[:-1] - s[1:]) / s[:-1]
    if np.any(gaps < rel):
        warnings.warn(
            "leading singular values are nearly degenerate; ensemble columns may not correspond",
            RuntimeWarning,
            stacklevel=3,
        )


def empirical_ensemble(
    Z_L_obs, k: int = 4, n: int = 64, seed=None, n_high: int = 0
) -> BasisDistribution:
    """Leave-``k``-out SVD ensemble of the low-fidelity observations.

    Each member is the Dirac basis of the data with a uniformly drawn
    ``k``-subset of columns removed, sign-aligned with the full-data basis.
    ``n_high`` tightens the admissible range to ``1 < k < N_L - n_high``.
    """
    Z = np.atleast_2d(np.asarray(Z_L_obs, dtype=float))
    n_l = Z.shape[1]
    if not 1 < k < n_l - n_high:
        raise ValueError(f"leave-out size k={k} must satisfy 1 < k < {n_l - n_high}")
    if n < 1:
        raise ValueError("need at least one realization")
    reference = svd_dirac_basis(Z)
    _check_gaps(reference.singular_values)
    rng = np.random.default_rng(seed)
    members = []
    for _ in range(n):
        drop = rng.choice(n_l, size=k, replace=False)
        keep = np.setdiff1d(np.arange(n_l), drop)
        member = svd_dirac_basis(Z[:, keep])
        n_cols = min(member.singular_values.size, reference.singular_values.size)
        members.append(align_signs(member, reference, n_cols))
    return BasisDistribution("empirical", tuple(members), k=k, seed=seed, reference=reference)


def project_coefficients(Z_obs, basis, n: int) -> np.ndarray:
    """Coefficients ``alpha[i, j] = Gamma_i . Z[:, j]`` for ``i < n``; shape ``(n, N_x)``."""
    Z = np.atleast_2d(np.asarray(Z_obs, dtype=float))
    g = basis.gamma if isinstance(basis, OrthonormalBasis) else np.asarray(basis)
    if n > g.shape[0]:
        raise ValueError(f"truncation n={n} exceeds N_t={g.shape[0]}")
    if n < 0:
        raise ValueError("truncation must be nonnegative")
    return g[:, :n].T @ Z


def orthogonal_residual(Z_obs, alpha, basis, n: int) -> np.ndarray:
    """``Z - Gamma_{1..n} alpha``: the part of the observations orthogonal to the leading vectors."""
    Z = np.atleast_2d(np.asarray(Z_obs, dtype=float))
    g = basis.gamma if isinstance(basis, OrthonormalBasis) else np.asarray(basis)
    if n == 0:
        return Z.copy()
    return Z - g[:, :n] @ np.asarray(alpha)[:n]


def save_distribution(dist: BasisDistribution, path) -> None:
    """Store members as an ``.npz`` blob with a JSON-able manifest inside."""
    arrays = {f"member_{i}": m.gamma for i, m in enumerate(dist.members)}
    if dist.reference is not None:
        arrays["reference"] = dist.reference.gamma
    manifest = {"kind": dist.kind, "k": dist.k, "seed": dist.seed, "n": dist.n}
    np.savez_compressed(path, manifest=np.array(json.dumps(manifest)), **arrays)


def load_distribution(path) -> BasisDistribution:
    with np.load(path) as blob:
        manifest = json.loads(str(blob["manifest"]))
        members = tuple(OrthonormalBasis(blob[f"member_{i}"]) for i in range(manifest["n"]))
        ref = OrthonormalBasis(blob["reference"]) if "reference" in blob else None
    return BasisDistribution(manifest["kind"], members, manifest["k"], manifest["seed"], ref)
