"""Asymptotic machinery for the scalar MA(1) synthetic likelihood: score and
Hessian, the root set of the score, local-Gaussian shape checks around each
mode, and the sandwich variance of the posterior mean.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, List, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq
from scipy.stats import norm

from .errors import (
    DomainError,
    InsufficientResolutionError,
    NotAMaximumError,
    ParameterDomainError,
)
from .posterior import GridPosterior
from .synthlik import (
    ma1_exact_cov,
    ma1_exact_cov_dtheta,
    ma1_exact_loglik,
    ma1_exact_mean,
)

_FD_REL_STEP = 1e-5


@dataclass(frozen=True)
class ScoreReport:
    theta: float
    score: float
    hessian: float


@dataclass(frozen=True)
class RootSet:
    """Roots of the score: (theta_star, hessian_at_root, is_local_max)."""

    roots: List[Tuple[float, float, bool]]
    no_sign_change: bool = False

    def local_maxima(self) -> List[float]:
        return [t for t, _, is_max in self.roots if is_max]


@dataclass(frozen=True)
class SandwichReport:
    Delta: np.ndarray
    W_star: np.ndarray
    sandwich: np.ndarray


def _check_theta(theta: float) -> float:
    theta = float(theta)
    if abs(theta) >= 0.999:
        raise DomainError(f"theta must satisfy |theta| < 0.999, got {theta}")
    return theta


def ma1_score_value(theta: float, s_obs, n: int, kappa: str = "1/n") -> float:
    """Normalized SL score M_n(theta) for the exact MA(1) synthetic likelihood.

    With kappa="1/n" (default) this is the exact derivative of
    (1/n) ln g_n(S | theta):
        M_n = kappa_t * (-1/2 tr(S^-1 L)) + (1/n) [ G' S^-1 r + 1/2 r' S^-1 L S^-1 r ]
    with r = S_obs - b(theta), G = db/dtheta, L = dSigma_n/dtheta, and
    kappa_t = 1/n. The kappa="1" switch leaves the trace term unscaled.
    """
    theta = _check_theta(theta)
    s_obs = np.asarray(s_obs, dtype=float)
    n = int(n)
    Sigma = ma1_exact_cov(theta, n)
    Lam = ma1_exact_cov_dtheta(theta, n)
    G = np.array([2.0 * theta, 1.0])
    r = s_obs - ma1_exact_mean(theta)
    Si = np.linalg.inv(Sigma)
    trace_term = -0.5 * float(np.trace(Si @ Lam))
    rest = float(G @ Si @ r) + 0.5 * float(r @ Si @ Lam @ Si @ r)
    if kappa == "1/n":
        return (trace_term + rest) / n
    if kappa == "1":
        return trace_term + rest / n
    raise DomainError(f"kappa must be '1/n' or '1', got {kappa!r}")


def ma1_hessian_value(theta: float, s_obs, n: int, kappa: str = "1/n") -> float:
    """H_n(theta): central finite difference of the score."""
    theta = _check_theta(theta)
    h = _FD_REL_STEP * max(1.0, abs(theta))
    return (
        ma1_score_value(theta + h, s_obs, n, kappa)
        - ma1_score_value(theta - h, s_obs, n, kappa)
    ) / (2.0 * h)


def sl_score_ma1(theta: float, s_obs, n: int, kappa: str = "1/n") -> ScoreReport:
    return ScoreReport(
        theta=float(theta),
        score=ma1_score_value(theta, s_obs, n, kappa),
        hessian=ma1_hessian_value(theta, s_obs, n, kappa),
    )


def find_roots(score_fn: Callable[[float], float], grid) -> RootSet:
    """Sign-change detection plus bisection refinement of score roots.

    Each root is refined until |score| < 1e-8 and classified as a local
    maximum by the finite-difference slope of the score there.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size < 2:
        raise DomainError("grid needs at least 2 points")
    vals = np.array([score_fn(t) for t in grid])
    roots: List[Tuple[float, float, bool]] = []
    for i in range(grid.size - 1):
        a, b = grid[i], grid[i + 1]
        fa, fb = vals[i], vals[i + 1]
        if fa == 0.0:
            root = float(a)
        elif fa * fb < 0.0:
            root = float(brentq(score_fn, a, b, xtol=1e-14, rtol=8.9e-16))
        else:
            continue
        if abs(score_fn(root)) >= 1e-8:
            continue
        h = _FD_REL_STEP * max(1.0, abs(root))
        hess = (score_fn(root + h) - score_fn(root - h)) / (2.0 * h)
        roots.append((root, float(hess), hess < 0.0))
    if not roots:
        return RootSet(roots=[], no_sign_change=True)
    roots.sort(key=lambda r: r[0])
    return RootSet(roots=roots)


def local_shape_check(
    grid_post: GridPosterior,
    root: float,
    window: float,
    n: int,
    hessian: float,
) -> Tuple[float, float, float]:
    """Quadratic fit of the log posterior density near a mode against the
    Gaussian shape implied by the score Hessian.

    Fits ln(unnormalized density) on grid points with |theta - root| <=
    window; the local variance of t = sqrt(n)(theta - root) is
    Delta_hat = -n / curvature, compared against Delta = -1/hessian
    (``hessian`` being H_n from the normalized score). Returns
    (Delta_hat, Delta_from_hessian, relative discrepancy).
    """
    mask = np.abs(grid_post.grid - root) <= window
    if int(np.sum(mask)) < 5:
        raise InsufficientResolutionError(
            f"only {int(np.sum(mask))} grid points within window {window} of {root}"
        )
    x = grid_post.grid[mask]
    y = grid_post.log_unnorm[mask]
    coeffs = np.polynomial.polynomial.polyfit(x - root, y, 2)
    curvature = 2.0 * coeffs[2]
    if curvature >= 0.0:
        raise NotAMaximumError(f"log density is not concave near {root}")
    delta_hat = -float(n) / float(curvature)
    if hessian >= 0.0:
        raise NotAMaximumError(f"score Hessian at {root} is not negative")
    delta_ref = -1.0 / float(hessian)
    return delta_hat, delta_ref, abs(delta_hat - delta_ref) / delta_ref


def sandwich_variance(G, Sigma, V, H) -> SandwichReport:
    """Sandwich variance Delta W* Delta' of the posterior mean.

    Delta = (-H)^{-1}; W* = G' Sigma^{-1} V Sigma^{-1} G, with G the
    gradient of the summary mean, Sigma the limit SL covariance, and V the
    asymptotic variance of the scaled summaries.
    """
    G = np.atleast_2d(np.asarray(G, dtype=float))
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    V = np.atleast_2d(np.asarray(V, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    if G.shape[0] != Sigma.shape[0]:
        G = G.T
    if np.any(np.linalg.eigvalsh(H) >= 0.0):
        raise NotAMaximumError("Hessian is not negative-definite")
    Delta = np.linalg.inv(-H)
    Si = np.linalg.inv(Sigma)
    W = G.T @ Si @ V @ Si @ G
    W = 0.5 * (W + W.T)
    sandwich = Delta @ W @ Delta.T
    return SandwichReport(
        Delta=0.5 * (Delta + Delta.T), W_star=W, sandwich=0.5 * (sandwich + sandwich.T)
    )


@dataclass(frozen=True)
class HessianScan:
    """Per-grid-point table of the exact MA(1) log-SL, score, and Hessian."""

    grid: np.ndarray
    log_sl: np.ndarray
    score: np.ndarray
    hessian: np.ndarray
    is_mode: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["theta", "log_sl", "score", "hessian", "is_mode"])
            for i in range(self.grid.size):
                w.writerow(
                    [
                        repr(float(self.grid[i])),
                        repr(float(self.log_sl[i])),
                        repr(float(self.score[i])),
                        repr(float(self.hessian[i])),
                        int(self.is_mode[i]),
                    ]
                )


def hessian_scan(s_obs, n: int, grid, kappa: str = "1/n") -> HessianScan:
    """Tabulate log-SL, score, and Hessian over a grid; grid points nearest
    a descending zero crossing of the score with negative Hessian are
    flagged as modes."""
    grid = np.asarray(grid, dtype=float)
    s_obs = np.asarray(s_obs, dtype=float)
    log_sl = np.asarray(ma1_exact_loglik(grid, s_obs, n), dtype=float)
    score = np.array([ma1_score_value(t, s_obs, n, kappa) for t in grid])
    hess = np.array([ma1_hessian_value(t, s_obs, n, kappa) for t in grid])
    is_mode = np.zeros(grid.size, dtype=bool)
    for i in range(grid.size - 1):
        if score[i] > 0.0 >= score[i + 1]:
            j = i if abs(score[i]) <= abs(score[i + 1]) else i + 1
            if hess[j] < 0.0:
                is_mode[j] = True
    return HessianScan(grid=grid, log_sl=log_sl, score=score, hessian=hess, is_mode=is_mode)


def t_weighted_l1(grid_post: GridPosterior, theta_star: float, n: int, delta: float) -> float:
    """|t|-weighted L1 distance between the posterior of t = sqrt(n)(theta -
    theta_star) and N(0, delta), computed by the trapezoid rule on the grid."""
    if delta <= 0.0:
        raise ParameterDomainError(f"delta must be positive, got {delta}")
    t = np.sqrt(n) * (grid_post.grid - theta_star)
    dens_t = grid_post.density / np.sqrt(n)
    ref = norm.pdf(t, loc=0.0, scale=np.sqrt(delta))
    return float(np.trapezoid(np.abs(t) * np.abs(dens_t - ref), t))
