"""Spring-mass cart with a hanging pendulum: high/low fidelity codes and Sobol analysis.

The cart (mass ``M``, spring stiffness ``k``) moves horizontally; a
pendulum of mass ``m`` and length ``ell`` hangs from it. With ``y`` the
cart position and ``theta`` the pendulum angle, the Lagrangian

    T = (M + m) y'^2 / 2 + m ell y' theta' cos(theta) + m ell^2 theta'^2 / 2
    V = k y^2 / 2 - m g ell cos(theta)

gives

    (M + m) y'' + m ell (theta'' cos(theta) - theta'^2 sin(theta)) + k y = 0
    ell theta'' + y'' cos(theta) + g sin(theta) = 0.

Both codes output the horizontal position of the pendulum bob,
``y + ell sin(theta)``, on a regular time grid.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

INPUT_NAMES = ("M", "k", "theta0", "thetadot0", "y0")
#: Uniform supports of the inputs, in the order of ``INPUT_NAMES``.
INPUT_BOUNDS = np.array(
    [
        [10.0, 12.0],
        [1.0, 1.4],
        [np.pi / 4, np.pi / 3],
        [0.0, 0.1],
        [0.0, 0.2],
    ]
)


class IntegrationError(FloatingPointError):
    pass


@dataclass(frozen=True)
class PendulumInput:
    M: float
    k: float
    theta0: float
    thetadot0: float
    y0: float

    def as_array(self) -> np.ndarray:
        return np.array([self.M, self.k, self.theta0, self.thetadot0, self.y0])

    @classmethod
    def from_array(cls, a) -> "PendulumInput":
        return cls(*(float(v) for v in a))


@dataclass(frozen=True)
class PendulumConfig:
    m: float = 1.0
    ell: float = 1.0
    g: float = 9.81
    T: float = 10.0
    n_t: int = 101
    substeps: int = 250
    output: str = "bob"  # or "cart"

    def __post_init__(self):
        for name in ("m", "ell", "g", "T"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.n_t < 2 or self.substeps < 1:
            raise ValueError("n_t must be >= 2 and substeps >= 1")
        if self.output not in ("bob", "cart"):
            raise ValueError("output must be 'bob' or 'cart'")

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_t)


def _inputs_matrix(x) -> np.ndarray:
    if isinstance(x, PendulumInput):
        return x.as_array()[None, :]
    if isinstance(x, (list, tuple)) and x and isinstance(x[0], PendulumInput):
        return np.array([p.as_array() for p in x])
    a = np.asarray(x, dtype=float)
    return a[None, :] if a.ndim == 1 else a


def _is_single(x) -> bool:
    if isinstance(x, PendulumInput):
        return True
    if isinstance(x, (list, tuple)) and x and isinstance(x[0], PendulumInput):
        return False
    return np.ndim(x) == 1


def _output(y, theta, cfg: PendulumConfig):
    return y if cfg.output == "cart" else y + cfg.ell * np.sin(theta)


def _accelerations(y, th, thd, M, k, cfg: PendulumConfig):
    m, ell, g = cfg.m, cfg.ell, cfg.g
    s, c = np.sin(th), np.cos(th)
    denom = M + m * s * s
    ydd = (m * ell * thd * thd * s - k * y + m * g * s * c) / denom
    thdd = -(ydd * c + g * s) / ell
    return ydd, thdd


def energy(state, M, k, cfg: PendulumConfig):
    """Total mechanical energy for states ``(y, y', theta, theta')`` (broadcasts)."""
    y, yd, th, thd = state
    m, ell, g = cfg.m, cfg.ell, cfg.g
    kin = 0.5 * (M + m) * yd**2 + m * ell * yd * thd * np.cos(th) + 0.5 * m * ell**2 * thd**2
    return kin + 0.5 * k * y**2 - m * g * ell * np.cos(th)


def integrate_high(x, cfg: PendulumConfig | None = None, return_states: bool = False):
    """Semi-implicit Euler integration of the nonlinear equations for a batch of inputs.

    Velocities are updated first and positions use the new velocities.
    Returns the output matrix of shape ``(n_inputs, n_t)`` and, on request,
    the state history ``(4, n_inputs, n_t)``.
    """
    cfg = cfg or PendulumConfig()
    X = _inputs_matrix(x)
    M, k, th, thd, y = (X[:, i].copy() for i in range(5))
    yd = np.zeros_like(y)
    n_t = cfg.n_t
    h = cfg.T / (n_t - 1) / cfg.substeps
    states = np.empty((4, X.shape[0], n_t))
    states[:, :, 0] = y, yd, th, thd
    with np.errstate(over="ignore", invalid="ignore"):
        for u in range(1, n_t):
            for _ in range(cfg.substeps):
                ydd, thdd = _accelerations(y, th, thd, M, k, cfg)
                yd += h * ydd
                thd += h * thdd
                y += h * yd
                th += h * thd
            states[:, :, u] = y, yd, th, thd
    if not np.all(np.isfinite(states)):
        raise IntegrationError("non-finite state during integration")
    out = _output(states[0], states[2], cfg)
    return (out, states) if return_states else out


def simulate_high(x, cfg: PendulumConfig | None = None) -> np.ndarray:
    """High-fidelity output for one input (vector of length ``n_t``) or a batch (rows)."""
    out = integrate_high(x, cfg)
    return out[0] if _is_single(x) else out


def linear_system(M, k, cfg: PendulumConfig):
    """Symmetric mass and stiffness matrices of the small-angle model, ``Mm q'' + K q = 0``."""
    m, ell, g = cfg.m, cfg.ell, cfg.g
    Mm = np.array([[M + m, m * ell], [m * ell, m * ell * ell]])
    K = np.array([[k, 0.0], [0.0, m * g * ell]])
    return Mm, K


def _low_one(row, cfg: PendulumConfig) -> np.ndarray:
    M, k, th0, thd0, y0 = row
    Mm, K = linear_system(M, k, cfg)
    q0 = np.array([y0, th0])
    qd0 = np.array([0.0, thd0])
    t = cfg.times
    try:
        w2, Phi = scipy.linalg.eigh(K, Mm)  # Phi^T Mm Phi = I
        if np.min(w2) <= 0 or np.min(np.diff(w2)) <= 1e-12 * np.max(w2):
            raise np.linalg.LinAlgError("defective modal decomposition")
    except np.linalg.LinAlgError:
        return _low_fallback(row, cfg)
    w = np.sqrt(w2)
    a = Phi.T @ Mm @ q0
    b = Phi.T @ Mm @ qd0
    modal = a[:, None] * np.cos(w[:, None] * t) + (b / w)[:, None] * np.sin(w[:, None] * t)
    q = Phi @ modal
    return _output(q[0], q[1], cfg)


def _low_fallback(row, cfg: PendulumConfig, substeps: int = 2000) -> np.ndarray:
    return integrate_linear(row, PendulumConfig(cfg.m, cfg.ell, cfg.g, cfg.T, cfg.n_t, substeps, cfg.output))[0]


def integrate_linear(x, cfg: PendulumConfig) -> np.ndarray:
    """Semi-implicit Euler integration of the small-angle equations (reference integrator)."""
    X = _inputs_matrix(x)
    out = np.empty((X.shape[0], cfg.n_t))
    h = cfg.T / (cfg.n_t - 1) / cfg.substeps
    for j, (M, k, th0, thd0, y0) in enumerate(X):
        Mm, K = linear_system(M, k, cfg)
        A = -np.linalg.solve(Mm, K)
        q = np.array([y0, th0])
        qd = np.array([0.0, thd0])
        out[j, 0] = _output(q[0], q[1], cfg)
        for u in range(1, cfg.n_t):
            for _ in range(cfg.substeps):
                qd = qd + h * (A @ q)
                q = q + h * qd
            out[j, u] = _output(q[0], q[1], cfg)
    return out


def simulate_low(x, cfg: PendulumConfig | None = None) -> np.ndarray:
    """Low-fidelity output: exact modal solution of the linearized system."""
    cfg = cfg or PendulumConfig()
    X = _inputs_matrix(x)
    out = np.array([_low_one(row, cfg) for row in X])
    return out[0] if _is_single(x) else out


def to_physical(unit_points) -> np.ndarray:
    """Map points of ``[0, 1]^5`` to the input supports."""
    U = np.atleast_2d(unit_points)
    return INPUT_BOUNDS[:, 0] + U * (INPUT_BOUNDS[:, 1] - INPUT_BOUNDS[:, 0])


def sample_inputs(n: int, seed=None) -> list[PendulumInput]:
    """I.i.d. uniform draws over the input supports."""
    rng = np.random.default_rng(seed)
    return [PendulumInput.from_array(r) for r in to_physical(rng.random((n, 5)))]


# ------------------------------------------------------------------ Sobol


MIN_SOBOL_MC = 1000


@dataclass(frozen=True)
class SobolResult:
    first_order: np.ndarray  # (d, n_out)
    interactions: np.ndarray  # (n_out,)
    variance: np.ndarray  # (n_out,)


def sobol_saltelli(code, d: int, n_mc: int, seed=None, sampler=None) -> SobolResult:
    """First-order Sobol indices by the Saltelli (2010) pick-freeze estimator.

    ``code`` maps an ``(n, d)`` array of unit-cube points (transformed by
    ``sampler`` when given) to outputs of shape ``(n,)`` or ``(n, n_out)``.
    Uses ``n_mc * (d + 2)`` evaluations. Outputs with zero variance get NaN
    indices.
    """
    if n_mc < MIN_SOBOL_MC:
        raise ValueError(f"n_mc must be at least {MIN_SOBOL_MC}")
    rng = np.random.default_rng(seed)
    A = rng.random((n_mc, d))
    B = rng.random((n_mc, d))
    AB = np.repeat(A[None], d, axis=0)
    for i in range(d):
        AB[i, :, i] = B[:, i]
    pts = np.vstack([A, B, AB.reshape(-1, d)])
    if sampler is not None:
        pts = sampler(pts)
    Y = np.asarray(code(pts), dtype=float)
    Y = Y.reshape(Y.shape[0], -1)
    fA, fB = Y[:n_mc], Y[n_mc : 2 * n_mc]
    fAB = Y[2 * n_mc :].reshape(d, n_mc, -1)
    both = np.vstack([fA, fB])
    var = np.var(both, axis=0)
    # centring f(B) leaves the estimator consistent and removes the mean-squared noise
    fB_c = fB - both.mean(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        S = np.mean(fB_c[None] * (fAB - fA[None]), axis=1) / var[None]
    S[:, var <= 1e-300] = np.nan
    inter = np.clip(1.0 - np.nansum(S, axis=0), 0.0, None)
    inter[var <= 1e-300] = np.nan
    return SobolResult(S, inter, var)


def pendulum_sobol(level: str, n_mc: int, seed=None, cfg: PendulumConfig | None = None) -> SobolResult:
    cfg = cfg or PendulumConfig()
    code = (lambda X: integrate_high(X, cfg)) if level == "high" else (lambda X: simulate_low(X, cfg))
    return sobol_saltelli(code, 5, n_mc, seed, sampler=to_physical)
