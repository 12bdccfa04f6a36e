"""Summary statistics and a circular moving-block bootstrap for their variance.

All summary maps here accept either a single series (1-D, shape (n,)) or a
batch of series (2-D, shape (m, n)), operating on the last axis, and return
(d,) or (m, d) respectively.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateSummaryError, DomainError, ParameterDomainError
from .rng import make_rng


def autocov_batch(y: np.ndarray, lags: Sequence[int] = (0, 1)) -> np.ndarray:
    """Uncentered autocovariances S_j = (1/n) sum_{t=j+1}^n y_t y_{t-j}.

    The divisor is n for every lag (not n - j) and the series is not
    mean-centered, so for the MA(1) model E[S_0] = 1 + theta^2 and
    E[S_1] = theta exactly.
    """
    y = np.asarray(y, dtype=float)
    one_d = y.ndim == 1
    y2 = np.atleast_2d(y)
    n = y2.shape[1]
    out = np.empty((y2.shape[0], len(lags)))
    for i, j in enumerate(lags):
        if not 0 <= j < n:
            raise ParameterDomainError(f"lag {j} invalid for series of length {n}")
        out[:, i] = np.einsum("ij,ij->i", y2[:, j:], y2[:, : n - j]) / n
    return out[0] if one_d else out


def autocov_summaries(y, lags: Sequence[int] = (0, 1)) -> np.ndarray:
    return autocov_batch(y, lags)


def gk_summary_batch(y: np.ndarray, include_tail: bool = True) -> np.ndarray:
    """Robust quantile summaries for the g-and-k model.

    S1 = median, S2 = interquartile range, S3 = quartile skewness
    (Q3 - 2 Q2 + Q1) / IQR, and, when ``include_tail``, S4 = the 1%
    quantile. Quantiles use linear interpolation (numpy's default).
    """
    y = np.asarray(y, dtype=float)
    one_d = y.ndim == 1
    y2 = np.atleast_2d(y)
    q1, q2, q3 = np.quantile(y2, [0.25, 0.5, 0.75], axis=1)
    iqr = q3 - q1
    if np.any(iqr <= 0.0):
        raise DegenerateSummaryError("interquartile range is not positive")
    cols = [q2, iqr, (q3 - 2.0 * q2 + q1) / iqr]
    if include_tail:
        cols.append(np.quantile(y2, 0.01, axis=1))
    out = np.stack(cols, axis=1)
    return out[0] if one_d else out


def gk_summaries(y, include_tail: bool = True) -> np.ndarray:
    return gk_summary_batch(y, include_tail=include_tail)


@dataclass(frozen=True)
class BootstrapSpec:
    """Circular moving-block bootstrap settings."""

    block_len: int = 10
    n_boot: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.block_len < 1:
            raise ParameterDomainError(f"block_len must be >= 1, got {self.block_len}")
        if self.n_boot < 2:
            raise ParameterDomainError(f"n_boot must be >= 2, got {self.n_boot}")


def block_bootstrap_resample(
    y: np.ndarray, spec: BootstrapSpec, rng: np.random.Generator | None = None
) -> np.ndarray:
    """(n_boot, n) matrix of circular moving-block bootstrap resamples.

    Blocks of length L start at uniform positions and wrap around the end
    of the series; ceil(n / L) blocks are concatenated and truncated to n.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise ParameterDomainError("block bootstrap expects a single 1-D series")
    n = y.shape[0]
    if spec.block_len > n:
        raise DomainError(
            f"block_len {spec.block_len} exceeds series length {n}"
        )
    L = spec.block_len
    rng = make_rng(spec.seed) if rng is None else rng
    n_blocks = -(-n // L)  # ceil
    starts = rng.integers(0, n, size=(spec.n_boot, n_blocks))
    offsets = np.arange(L)
    idx = (starts[:, :, None] + offsets[None, None, :]) % n
    return y[idx.reshape(spec.n_boot, n_blocks * L)[:, :n]]


def block_bootstrap_cov(
    y: np.ndarray,
    summary_fn: Callable[[np.ndarray], np.ndarray],
    spec: BootstrapSpec = BootstrapSpec(),
) -> np.ndarray:
    """Bootstrap covariance of summary_fn(y) under a circular block bootstrap.

    Returns the (d, d) sample covariance (divisor n_boot - 1) of the
    summaries across resamples; for scalar summaries the result is the
    1x1 matrix. ``summary_fn`` is applied to the whole (n_boot, n) resample
    matrix if it accepts 2-D input, else row by row.
    """
    resamples = block_bootstrap_resample(y, spec)
    try:
        stats = np.asarray(summary_fn(resamples), dtype=float)
        if stats.ndim == 1:
            stats = stats[:, None]
        if stats.shape[0] != spec.n_boot:
            raise ValueError
    except Exception:
        rows = [np.atleast_1d(np.asarray(summary_fn(row), dtype=float)) for row in resamples]
        stats = np.stack(rows, axis=0)
    cov = np.atleast_2d(np.cov(stats, rowvar=False, ddof=1))
    if not np.all(np.isfinite(cov)):
        raise DegenerateSummaryError("bootstrap produced non-finite summary covariance")
    return cov
