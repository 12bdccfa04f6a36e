"""Misspecification diagnostics: Gaussian KL between adjusted and unadjusted
posterior approximations (KLDN), posterior predictive summary checks,
bootstrap variance checks, inflation-parameter prior-departure reports, and
the replication/coverage harness.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import expon, kstest

from .adjust import PipelineConfig, run_adjusted_pipeline
from .errors import DomainError, ParameterDomainError
from .models import ModelSpec, SvParams, TimeSeries, sv_batch
from .posterior import Chain
from .rng import child_seed, make_rng
from .summaries import BootstrapSpec, block_bootstrap_cov
from .synthlik import ma1_exact_mean


def kldn(mu_S: float, sd_S: float, mu_A: float, sd_A: float) -> float:
    """Gaussian KL between the unadjusted (S) and adjusted (A) normal
    approximations: log(sd_A/sd_S) + (sd_S^2 + (mu_S-mu_A)^2)/(2 sd_A^2) - 1/2."""
    if sd_S <= 0.0 or sd_A <= 0.0:
        raise DomainError("standard deviations must be positive")
    return float(
        np.log(sd_A / sd_S) + (sd_S**2 + (mu_S - mu_A) ** 2) / (2.0 * sd_A**2) - 0.5
    )


@dataclass(frozen=True)
class KldnReport:
    """Per-parameter moments of the two approximations and their KLDN."""

    mu_S: np.ndarray
    sd_S: np.ndarray
    mu_A: np.ndarray
    sd_A: np.ndarray
    values: np.ndarray


def kldn_report(draws_S, draws_A) -> KldnReport:
    """KLDN per parameter from unadjusted and adjusted draw matrices."""
    draws_S = np.atleast_2d(np.asarray(draws_S, dtype=float))
    draws_A = np.atleast_2d(np.asarray(draws_A, dtype=float))
    if draws_S.ndim == 2 and draws_S.shape[0] == 1:
        draws_S = draws_S.T
    if draws_A.ndim == 2 and draws_A.shape[0] == 1:
        draws_A = draws_A.T
    mu_S, sd_S = draws_S.mean(axis=0), draws_S.std(axis=0, ddof=1)
    mu_A, sd_A = draws_A.mean(axis=0), draws_A.std(axis=0, ddof=1)
    vals = np.array(
        [kldn(mu_S[j], sd_S[j], mu_A[j], sd_A[j]) for j in range(mu_S.shape[0])]
    )
    return KldnReport(mu_S=mu_S, sd_S=sd_S, mu_A=mu_A, sd_A=sd_A, values=vals)


def _tail_prob(pred: np.ndarray, obs: float) -> float:
    """min(F, 1-F) with F the continuity-corrected empirical CDF
    (count+1)/(n+2), keeping F strictly inside (0, 1)."""
    n = pred.shape[0]
    f = (float(np.sum(pred < obs)) + 1.0) / (n + 2.0)
    return min(f, 1.0 - f)


@dataclass(frozen=True)
class PpcReport:
    """Posterior predictive replicates per summary with observed tail
    probabilities min(F(obs), 1 - F(obs))."""

    predictive: np.ndarray
    observed: np.ndarray
    tail_probs: np.ndarray

    def to_csv(self, path) -> None:
        d = self.predictive.shape[1]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rep", *(f"S{j + 1}" for j in range(d))])
            for i, row in enumerate(self.predictive):
                w.writerow([i, *(repr(float(v)) for v in row)])


def _chain_draw_matrix(chain) -> np.ndarray:
    if isinstance(chain, Chain):
        if len(chain) == 0:
            raise DomainError("chain is empty")
        return chain.draws
    draws = np.atleast_2d(np.asarray(chain, dtype=float))
    if draws.size == 0:
        raise DomainError("chain is empty")
    if draws.shape[0] == 1:
        draws = draws.T
    return draws


def posterior_predictive_check(
    chain,
    model: ModelSpec,
    summary_fn,
    s_obs,
    n_rep: int,
    seed: int,
    *,
    n: int,
) -> PpcReport:
    """One predictive dataset (and its summaries) per uniformly resampled
    chain draw; reports the observed summaries' predictive tail probabilities."""
    draws = _chain_draw_matrix(chain)
    s_obs = np.atleast_1d(np.asarray(s_obs, dtype=float))
    rng = make_rng(seed)
    idx = rng.integers(0, draws.shape[0], size=n_rep)
    pred = np.empty((n_rep, s_obs.shape[0]))
    for i, j in enumerate(idx):
        sim = model.simulate(draws[j], 1, n, rng)
        pred[i] = np.atleast_2d(summary_fn(sim))[0]
    tails = np.array([_tail_prob(pred[:, k], s_obs[k]) for k in range(s_obs.shape[0])])
    return PpcReport(predictive=pred, observed=s_obs, tail_probs=tails)


@dataclass(frozen=True)
class BootstrapVarianceReport:
    """Observed vs posterior-predictive bootstrap variances per summary."""

    observed_var: np.ndarray
    predictive_var: np.ndarray
    tail_probs: np.ndarray
    flagged: np.ndarray  # tail prob < 1%


def bootstrap_variance_check(
    y,
    summary_fn,
    chain,
    model: ModelSpec,
    spec: BootstrapSpec = BootstrapSpec(),
    *,
    n_rep: int = 100,
    seed: int = 0,
) -> BootstrapVarianceReport:
    """Compare the block-bootstrap variance of each observed summary against
    its distribution over posterior predictive datasets; summaries whose
    observed variance is in a 1% predictive tail are flagged."""
    values = y.values if isinstance(y, TimeSeries) else np.asarray(y, dtype=float)
    n = values.shape[0]
    observed = np.diag(block_bootstrap_cov(values, summary_fn, spec))
    draws = _chain_draw_matrix(chain)
    rng = make_rng(seed)
    idx = rng.integers(0, draws.shape[0], size=n_rep)
    pred = np.empty((n_rep, observed.shape[0]))
    for i, j in enumerate(idx):
        sim = np.atleast_2d(model.simulate(draws[j], 1, n, rng))[0]
        rep_spec = BootstrapSpec(
            block_len=spec.block_len,
            n_boot=spec.n_boot,
            seed=child_seed(spec.seed, "ppc-boot", i),
        )
        pred[i] = np.diag(block_bootstrap_cov(sim, summary_fn, rep_spec))
    tails = np.array(
        [_tail_prob(pred[:, k], observed[k]) for k in range(observed.shape[0])]
    )
    return BootstrapVarianceReport(
        observed_var=observed,
        predictive_var=pred,
        tail_probs=tails,
        flagged=tails < 0.01,
    )


def gamma_departure(chain: Chain, prior_mean: float = 0.5) -> List[Tuple[int, float]]:
    """Kolmogorov-Smirnov distance between each inflation coordinate's
    marginal draws and its exponential prior, sorted largest first."""
    if not isinstance(chain, Chain) or chain.gammas is None:
        raise DomainError("chain carries no inflation (gamma) draws")
    if prior_mean <= 0.0:
        raise ParameterDomainError("prior_mean must be positive")
    out = []
    for j in range(chain.gammas.shape[1]):
        stat = kstest(chain.gammas[:, j], expon(scale=prior_mean).cdf).statistic
        out.append((j, float(stat)))
    out.sort(key=lambda t: -t[1])
    return out


@dataclass(frozen=True)
class CoverageConfig:
    """Replication study settings: data from the stochastic-volatility DGP,
    fit with the MA(1) naive and adjusted pipelines."""

    n_values: Sequence[int] = (100, 500, 1000)
    n_reps: int = 100
    sv: SvParams = field(default_factory=lambda: SvParams(-0.736, 0.90, 0.36))
    master_seed: int = 0
    n_grid: int = 2001
    n_draws: int = 10_000
    bootstrap: BootstrapSpec = field(default_factory=BootstrapSpec)
    w_scale_power: int = 2
    level: float = 0.95
    true_theta: float = 0.0


def _ma1_grad(theta):
    th = float(np.atleast_1d(theta)[0])
    return np.array([[2.0 * th], [1.0]])


def _flat_prior(theta) -> float:
    return 0.0 if -1.0 < float(np.atleast_1d(theta)[0]) < 1.0 else -np.inf


def coverage_experiment(config: CoverageConfig = CoverageConfig()):
    """Replicated naive-vs-adjusted comparison: per method and sample size,
    the mean (x 10^3) of posterior means, the average posterior variance,
    and the equal-tailed interval coverage of the pseudo-true value.

    Returns a list of row dicts with keys method, n, mean_x1000, var, cov.
    """
    from .summaries import autocov_summaries

    rows = []
    for n in config.n_values:
        grid = np.linspace(-0.999, 0.999, config.n_grid)
        stats = {"naive": ([], [], []), "adjusted": ([], [], [])}
        for rep in range(config.n_reps):
            seed = child_seed(config.master_seed, "coverage", n, rep)
            y = sv_batch(config.sv, 1, n, make_rng(seed, "data"))[0]
            cfg = PipelineConfig(
                grid=grid,
                n_draws=config.n_draws,
                bootstrap=BootstrapSpec(
                    block_len=config.bootstrap.block_len,
                    n_boot=config.bootstrap.n_boot,
                    seed=child_seed(seed, "boot"),
                ),
                w_scale_power=config.w_scale_power,
                level=config.level,
            )
            report = run_adjusted_pipeline(
                y,
                mean_fn=ma1_exact_mean,
                mean_gradient_fn=_ma1_grad,
                summary_fn=autocov_summaries,
                log_prior_fn=_flat_prior,
                config=cfg,
                seed=child_seed(seed, "pipeline"),
            )
            for method, draws, ci in (
                ("naive", report.draws, report.naive_interval),
                ("adjusted", report.adjusted_draws, report.interval),
            ):
                means, variances, covers = stats[method]
                means.append(float(draws.mean()))
                variances.append(float(draws.var(ddof=1)))
                covers.append(
                    float(ci[0, 0] <= config.true_theta <= ci[0, 1])
                )
        for method in ("naive", "adjusted"):
            means, variances, covers = stats[method]
            rows.append(
                {
                    "method": method,
                    "n": int(n),
                    "mean_x1000": 1000.0 * float(np.mean(means)),
                    "var": float(np.mean(variances)),
                    "cov": float(np.mean(covers)),
                }
            )
    return rows


def coverage_rows_to_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "n", "mean_x1000", "var", "cov"])
        for r in rows:
            w.writerow(
                [
                    r["method"],
                    r["n"],
                    repr(float(r["mean_x1000"])),
                    repr(float(r["var"])),
                    repr(float(r["cov"])),
                ]
            )
