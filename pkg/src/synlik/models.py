"""Seeded simulators: MA(1), stochastic volatility, and g-and-k.

Every simulator is a pure function of (params, n, seed): the same inputs
give bit-identical output, and there is no shared mutable state, so the
functions are safe to call from many threads at once.

The standard-normal inverse CDF used by the g-and-k quantile function is
``scipy.special.ndtri`` (the Cephes rational approximation, accurate to
well below 1e-9 relative error on (0, 1)).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.signal import lfilter
from scipy.special import ndtri

from .errors import DomainError, ParameterDomainError
from .rng import make_rng

GK_C = 0.8


@dataclass(frozen=True)
class Ma1Params:
    """Moving-average(1) coefficient, restricted to (-1, 1)."""

    theta: float

    def __post_init__(self):
        if not -1.0 < self.theta < 1.0:
            raise ParameterDomainError(f"theta must lie in (-1, 1), got {self.theta}")


@dataclass(frozen=True)
class SvParams:
    """Stochastic-volatility parameters: log-vol intercept, persistence, vol-of-vol."""

    omega: float
    rho: float
    sigma_v: float

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ParameterDomainError(f"rho must lie in (0, 1), got {self.rho}")
        if not 0.0 < self.sigma_v < 1.0:
            raise ParameterDomainError(f"sigma_v must lie in (0, 1), got {self.sigma_v}")


@dataclass(frozen=True)
class GkParams:
    """g-and-k quantile-function parameters (location, scale, skewness, kurtosis)."""

    A: float
    B: float
    g: float
    k: float
    c: float = GK_C

    def __post_init__(self):
        if self.B <= 0.0:
            raise ParameterDomainError(f"B must be positive, got {self.B}")
        if self.k <= -0.5:
            raise ParameterDomainError(f"k must exceed -0.5, got {self.k}")
        if self.c != GK_C:
            raise ParameterDomainError(f"c is fixed at {GK_C}, got {self.c}")


class TimeSeries:
    """An immutable, finite, ordered sequence of observations plus its seed."""

    __slots__ = ("values", "seed")

    def __init__(self, values, seed: int = 0):
        arr = np.asarray(values, dtype=float).copy()
        if arr.ndim != 1 or arr.shape[0] < 2:
            raise ParameterDomainError("a time series needs at least 2 values")
        if not np.all(np.isfinite(arr)):
            raise ParameterDomainError("time series values must all be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "seed", int(seed))

    def __setattr__(self, name, value):
        raise AttributeError("TimeSeries is immutable")

    def __len__(self):
        return self.values.shape[0]


def _check_n(n: int) -> int:
    n = int(n)
    if n < 2:
        raise ParameterDomainError(f"n must be at least 2, got {n}")
    return n


def ma1_batch(theta: float, m: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """m independent MA(1) paths of length n, as an (m, n) array.

    Each path uses n+1 innovations e_0..e_n so y_1 = e_1 + theta*e_0 is
    well defined: y_t = e_t + theta * e_{t-1}.
    """
    Ma1Params(theta)
    e = rng.standard_normal((m, n + 1))
    return e[:, 1:] + theta * e[:, :-1]


def simulate_ma1(params: Ma1Params, n: int, seed: int) -> TimeSeries:
    n = _check_n(n)
    y = ma1_batch(params.theta, 1, n, make_rng(seed))[0]
    return TimeSeries(y, seed)


def sv_batch(params: SvParams, m: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """m independent SV paths: y_t = exp(h_t/2) u_t, h_t an AR(1) in its stationary law."""
    mean_h = params.omega / (1.0 - params.rho)
    var_h = params.sigma_v**2 / (1.0 - params.rho**2)
    h0 = mean_h + np.sqrt(var_h) * rng.standard_normal((m, 1))
    v = rng.standard_normal((m, n))
    u = rng.standard_normal((m, n))
    drive = params.omega + params.sigma_v * v
    # h_t = omega + rho h_{t-1} + sigma_v v_t, run as a linear filter seeded at h0
    h, _ = lfilter([1.0], [1.0, -params.rho], drive, axis=1, zi=params.rho * h0)
    return np.exp(h / 2.0) * u


def simulate_sv(params: SvParams, n: int, seed: int) -> TimeSeries:
    n = _check_n(n)
    y = sv_batch(params, 1, n, make_rng(seed))[0]
    return TimeSeries(y, seed)


def gk_quantile(p, params: GkParams):
    """g-and-k quantile function A + B{1 + c tanh(g z/2)} z (1+z^2)^k at z = ndtri(p)."""
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise DomainError("p must lie strictly inside (0, 1)")
    z = ndtri(p)
    q = params.A + params.B * (1.0 + params.c * np.tanh(params.g * z / 2.0)) * z * (
        1.0 + z * z
    ) ** params.k
    return q if q.ndim else float(q)


def gk_batch(params: GkParams, m: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """m independent g-and-k samples via inversion of uniforms."""
    u = rng.random((m, n))
    # rng.random can in principle return 0.0; nudge into the open interval
    np.clip(u, 1e-300, None, out=u)
    return gk_quantile(u, params)


def simulate_gk(params: GkParams, n: int, seed: int) -> TimeSeries:
    n = _check_n(n)
    y = gk_batch(params, 1, n, make_rng(seed))[0]
    return TimeSeries(y, seed)


@dataclass(frozen=True)
class ModelSpec:
    """A parametric simulator with a summary map, consumed by the samplers.

    ``simulate(theta, m, n, rng)`` returns an (m, n) batch of datasets,
    ``summarize(batch)`` maps it to (m, d) summaries, and ``in_support``
    is the parameter-space indicator. ``labels`` name the parameters.
    """

    name: str
    simulate: Callable[[np.ndarray, int, int, np.random.Generator], np.ndarray]
    summarize: Callable[[np.ndarray], np.ndarray]
    in_support: Callable[[np.ndarray], bool]
    labels: tuple = ("theta",)
    summary_labels: tuple = ()


def ma1_model(lags: Sequence[int] = (0, 1)) -> ModelSpec:
    """MA(1) model with uncentered autocovariance summaries."""
    from .summaries import autocov_batch

    lags = tuple(int(j) for j in lags)

    def simulate(theta, m, n, rng):
        th = float(np.atleast_1d(theta)[0])
        return ma1_batch(th, m, n, rng)

    def summarize(batch):
        return autocov_batch(batch, lags)

    def in_support(theta):
        th = float(np.atleast_1d(theta)[0])
        return -1.0 < th < 1.0

    return ModelSpec(
        name="ma1",
        simulate=simulate,
        summarize=summarize,
        in_support=in_support,
        labels=("theta",),
        summary_labels=tuple(f"S{j}" for j in lags),
    )


def gk_model(k: float = 0.0, include_tail: bool = True) -> ModelSpec:
    """g-and-k model with fixed kurtosis k and parameters (A, B, g).

    Priors in the experiments are uniform on A in [-1,1], B in (0,1],
    g in [-5,5]; ``in_support`` encodes those boxes.
    """
    from .summaries import gk_summary_batch

    def simulate(theta, m, n, rng):
        a, b, g = (float(v) for v in np.atleast_1d(theta)[:3])
        return gk_batch(GkParams(a, b, g, k), m, n, rng)

    def summarize(batch):
        return gk_summary_batch(batch, include_tail=include_tail)

    def in_support(theta):
        a, b, g = (float(v) for v in np.atleast_1d(theta)[:3])
        return -1.0 <= a <= 1.0 and 0.0 < b <= 1.0 and -5.0 <= g <= 5.0

    d = 4 if include_tail else 3
    return ModelSpec(
        name="gk",
        simulate=simulate,
        summarize=summarize,
        in_support=in_support,
        labels=("A", "B", "g"),
        summary_labels=tuple(f"S{j}" for j in range(1, d + 1)),
    )
