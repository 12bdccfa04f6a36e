"""Synthetic-likelihood evaluation: estimated SL, exact MA(1) SL, and
Gaussian Kullback-Leibler tooling for the incompatible-summaries regime.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky, solve_triangular

from .errors import (
    DomainError,
    FactorizationError,
    ParameterDomainError,
    SingularCovarianceError,
)
from .models import ModelSpec
from .rng import make_rng

_LOG_2PI = float(np.log(2.0 * np.pi))
_EIG_TOL = 1e-12


@dataclass(frozen=True)
class SynthLikEstimate:
    """Monte-Carlo moments of the summaries at a parameter value.

    ``mean`` is the arithmetic mean and ``cov`` the unbiased sample
    covariance (divisor m - 1) of the m simulated summary vectors.
    """

    mean: np.ndarray
    cov: np.ndarray
    m: int


@dataclass(frozen=True)
class LimitTarget:
    """Limit law of the observed summaries: S_n -> b0, sqrt(n)(S_n - b0) => N(0, V)."""

    b0: np.ndarray
    V: np.ndarray


def _chol(cov: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor with a smallest-eigenvalue guard."""
    cov = np.asarray(cov, dtype=float)
    try:
        L = cholesky(cov, lower=True)
    except Exception as exc:
        raise FactorizationError(f"covariance is not positive-definite: {exc}") from exc
    if np.min(np.diag(L)) ** 2 <= _EIG_TOL * max(1.0, float(np.max(np.diag(cov)))):
        raise FactorizationError("covariance is numerically singular")
    return L

def sl_logpdf(mean: np.ndarray, cov: np.ndarray, s_obs: np.ndarray) -> float:
    """Gaussian log-density ln N(s_obs; mean, cov) via Cholesky factorization."""
    mean = np.asarray(mean, dtype=float)
    s_obs = np.asarray(s_obs, dtype=float)
    L = _chol(cov)
    z = solve_triangular(L, s_obs - mean, lower=True)
    d = mean.shape[0]
    return float(-0.5 * d * _LOG_2PI - np.sum(np.log(np.diag(L))) - 0.5 * z @ z)


def estimate_sl(model: ModelSpec, theta, m: int, n: int, seed) -> SynthLikEstimate:
    """Estimated synthetic-likelihood moments from m model simulations.

    ``seed`` may be an integer (a fresh generator is derived from it) or an
    ``np.random.Generator`` to draw from directly.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    batch = model.simulate(theta, int(m), int(n), rng)
    stats = np.atleast_2d(model.summarize(batch))
    d = stats.shape[1]
    if m <= d:
        raise SingularCovarianceError(
            f"m={m} simulations cannot identify a {d}x{d} covariance",
            theta=theta,
            m=m,
        )
    mean = stats.mean(axis=0)
    cov = np.cov(stats, rowvar=False, ddof=1).reshape(d, d)
    eigmin = float(np.linalg.eigvalsh(cov)[0])
    if eigmin <= _EIG_TOL:
        raise SingularCovarianceError(
            f"summary covariance singular (min eigenvalue {eigmin:.3e})",
            theta=theta,
            m=m,
        )
    return SynthLikEstimate(mean=mean, cov=cov, m=int(m))


# ---------------------------------------------------------------------------
# Exact MA(1) synthetic likelihood
# ---------------------------------------------------------------------------


def _check_ma1_theta(theta):
    theta = np.asarray(theta, dtype=float)
    if np.any(np.abs(theta) >= 1.0):
        raise ParameterDomainError("MA(1) theta must lie in (-1, 1)")
    return theta


def ma1_exact_mean(theta):
    """b(theta) = (1 + theta^2, theta) for the uncentered autocovariance summaries."""
    theta = _check_ma1_theta(theta)
    return np.stack([1.0 + theta**2, theta], axis=-1)


def _ma1_cov_entries(theta, n: int):
    t2 = theta * theta
    s11 = 2.0 / n**4 * (n**3 * (1.0 + t2) ** 2 + 2.0 * n**2 * (n - 1.0) * t2)
    s22 = ((n - 1.0) * ((1.0 + t2) ** 2 + t2) + 2.0 * (n - 2.0) * t2) / n**2
    s12 = 2.0 / n**4 * (n**2 * (n - 1.0) * 2.0 * (1.0 + t2) * theta)
    return s11, s12, s22


def ma1_exact_cov(theta, n: int) -> np.ndarray:
    """Leading-order exact covariance of the MA(1) summaries at sample size n.

    Vectorized: a scalar theta yields a (2, 2) matrix, a grid of shape (g,)
    yields (g, 2, 2).
    """
    theta = _check_ma1_theta(theta)
    n = int(n)
    if n < 2:
        raise ParameterDomainError(f"n must be at least 2, got {n}")
    s11, s12, s22 = _ma1_cov_entries(theta, n)
    cov = np.stack(
        [np.stack([s11, s12], axis=-1), np.stack([s12, s22], axis=-1)], axis=-2
    )
    det = s11 * s22 - s12 * s12
    if np.any(s11 <= 0) or np.any(det <= 0):
        raise DomainError("leading-order covariance not positive-definite at this n")
    return cov


def ma1_exact_cov_dtheta(theta, n: int) -> np.ndarray:
    """Analytic derivative of ma1_exact_cov with respect to theta."""
    theta = _check_ma1_theta(theta)
    n = int(n)
    d11 = 8.0 * theta * (1.0 + theta**2) / n + 8.0 * (n - 1.0) * theta / n**2
    d22 = ((n - 1.0) * (4.0 * theta * (1.0 + theta**2) + 2.0 * theta) + 4.0 * (n - 2.0) * theta) / n**2
    d12 = 4.0 * (n - 1.0) * (1.0 + 3.0 * theta**2) / n**2
    return np.stack(
        [np.stack([d11, d12], axis=-1), np.stack([d12, d22], axis=-1)], axis=-2
    )


def ma1_limit_cov(theta) -> np.ndarray:
    """Limit of n * ma1_exact_cov(theta, n) as n grows."""
    theta = _check_ma1_theta(theta)
    t2 = theta * theta
    s11 = 2.0 * (1.0 + t2) ** 2 + 4.0 * t2
    s22 = (1.0 + t2) ** 2 + 3.0 * t2
    s12 = 4.0 * theta * (1.0 + t2)
    return np.stack(
        [np.stack([s11, s12], axis=-1), np.stack([s12, s22], axis=-1)], axis=-2
    )


@dataclass(frozen=True)
class ExactMa1SL:
    """Closed-form MA(1) synthetic likelihood at sample size n."""

    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ParameterDomainError(f"n must be at least 2, got {self.n}")

    def mean(self, theta):
        return ma1_exact_mean(theta)

    def cov(self, theta):
        return ma1_exact_cov(theta, self.n)

    def loglik(self, theta, s_obs) -> np.ndarray:
        """ln N(s_obs; b(theta), Sigma_n(theta)), vectorized over a theta grid.

        Uses the closed-form 2x2 inverse, so grid evaluation is O(g).
        """
        theta = _check_ma1_theta(np.asarray(theta, dtype=float))
        s_obs = np.asarray(s_obs, dtype=float)
        s11, s12, s22 = _ma1_cov_entries(theta, self.n)
        det = s11 * s22 - s12 * s12
        r1 = s_obs[0] - (1.0 + theta**2)
        r2 = s_obs[1] - theta
        quad = (s22 * r1 * r1 - 2.0 * s12 * r1 * r2 + s11 * r2 * r2) / det
        out = -_LOG_2PI - 0.5 * np.log(det) - 0.5 * quad
        return out if out.ndim else float(out)


def ma1_exact_loglik(theta, s_obs, n: int):
    return ExactMa1SL(n).loglik(theta, s_obs)


def temper_logpdf(logpdf_value: float, alpha: float) -> float:
    """Temper the exact SL: N(s; b, Sigma)^alpha on the log scale."""
    if alpha < 0.0:
        raise DomainError(f"tempering exponent must be nonnegative, got {alpha}")
    return alpha * np.asarray(logpdf_value, dtype=float)


# ---------------------------------------------------------------------------
# Gaussian KL and the incompatibility index
# ---------------------------------------------------------------------------


def kl_gaussian_sl(target: LimitTarget, b, Sigma) -> float:
    """KL(N(b0, V0) || N(b, Sigma)), zero exactly when (b, Sigma) = (b0, V0)."""
    b0 = np.asarray(target.b0, dtype=float)
    V0 = np.atleast_2d(np.asarray(target.V, dtype=float))
    b = np.asarray(b, dtype=float)
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    d = b0.shape[0]
    Ls = _chol(Sigma)
    Lv = _chol(V0)
    factor = (Ls, True)
    trace = float(np.trace(cho_solve(factor, V0)))
    r = b - b0
    quad = float(r @ cho_solve(factor, r))
    logdet_ratio = 2.0 * float(
        np.sum(np.log(np.diag(Ls))) - np.sum(np.log(np.diag(Lv)))
    )
    return 0.5 * (logdet_ratio + trace + quad - d)


def _golden_min(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-12):
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while abs(b - a) > tol * max(1.0, abs(a) + abs(b)):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def misspec_index(mean_fn, cov_fn, b0, n: int, theta_grid):
    """Incompatibility index: inf over theta of the scaled quadratic form
    (b(theta) - b0)' [n Sigma_n(theta)]^{-1} (b(theta) - b0).

    Grid evaluation followed by golden-section refinement in the cell
    around the grid minimizer. Returns (inf_value, argmin).
    """
    grid = np.asarray(theta_grid, dtype=float)
    if grid.size == 0:
        raise DomainError("theta_grid must be non-empty")
    b0 = np.asarray(b0, dtype=float)
    n = int(n)

    def objective(theta: float) -> float:
        r = np.asarray(mean_fn(theta), dtype=float) - b0
        cov = n * np.atleast_2d(np.asarray(cov_fn(theta), dtype=float))
        return float(r @ cho_solve((_chol(cov), True), r))

    vals = np.array([objective(t) for t in grid])
    i = int(np.argmin(vals))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, grid.size - 1)]
    if lo == hi:
        return float(vals[i]), float(grid[i])
    arg, val = _golden_min(objective, float(lo), float(hi))
    if vals[i] < val:
        return float(vals[i]), float(grid[i])
    return float(val), float(arg)
