"""Batch experiment runner: subcommands that bind the simulators, posterior
machinery, adjustment pipeline and diagnostics into reproducible CSV/JSON
artifacts. All randomness flows from one master seed per invocation;
per-task seeds are derived by hashing (master seed, task path).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .adjust import PipelineConfig, adjust_draws, estimate_W, sandwich_w
from .diagnostics import (
    BootstrapVarianceReport,
    CoverageConfig,
    coverage_experiment,
    coverage_rows_to_csv,
    gamma_departure,
    kldn_report,
    posterior_predictive_check,
)
from .errors import ConfigError, DomainError, SynlikError
from .models import (
    GkParams,
    Ma1Params,
    SvParams,
    TimeSeries,
    gk_model,
    ma1_model,
    simulate_gk,
    simulate_ma1,
    simulate_sv,
    sv_batch,
)
from .posterior import MA1_GRID, bsl_rwmh, grid_posterior, rbsl_mh, rejection_abc
from .rng import child_seed, make_rng
from .summaries import BootstrapSpec, autocov_summaries, block_bootstrap_cov, gk_summaries
from .asymptotics import (
    find_roots,
    hessian_scan,
    local_shape_check,
    ma1_score_value,
    sl_score_ma1,
    t_weighted_l1,
)
from .synthlik import (
    estimate_sl,
    ma1_exact_loglik,
    ma1_exact_mean,
    sl_logpdf,
    temper_logpdf,
)

SV_DEFAULT = {"omega": -0.736, "rho": 0.90, "sigma_v": 0.36}

DEFAULTS = {
    "simulate": {
        "model": "sv",
        "n": 1000,
        "params": SV_DEFAULT,
        "threads": 1,
    },
    "exact-posterior": {
        "mode": "fig2",
        "s0_values": [0.01, 0.1, 0.25, 0.5, 0.75, 0.99],
        "s1": 0.0,
        "n_values": [100, 500, 1000],
        "n_grid": 2001,
        "n_reps": 50,
        "n": 1000,
        "sv": SV_DEFAULT,
        "threads": 1,
    },
    "temper": {
        "alphas": [1.0, 0.5],
        "n_values": [1000],
        "n_grid": 2001,
        "sv": SV_DEFAULT,
        "threads": 1,
    },
    "rbsl": {
        "n_values": [100, 500, 1000],
        "m": 10,
        "n_iter": 50000,
        "burn_in": 0,
        "proposal_sd": None,
        "proposal_sd_gamma": 0.8,
        "gamma_prior_mean": 0.5,
        "gamma_scans": 5,
        "pilot_m": 200,
        "sv": SV_DEFAULT,
        "threads": 1,
    },
    "adjust": {
        "n_values": [100, 1000],
        "n_reps": 100,
        "n_draws": 10000,
        "block_len": 10,
        "n_boot": 1000,
        "w_scale_power": 2,
        "sv": SV_DEFAULT,
        "threads": 1,
    },
    "hessian-scan": {
        "s0_values": [0.25, 0.99],
        "s1": 0.0,
        "n": 1000,
        "n_grid": 2001,
        "threads": 1,
    },
    "gk": {
        # True B small enough that the restricted fit stays interior to the
        # B <= 1 prior; with these values matching (S1, S2, S4) strands S3
        # by ~4 predictive sd while stranding S4 instead would cost ~20 sd.
        "true": {"A": 0.0, "B": 0.1, "g": 2.0, "k": 0.5},
        "fit_k": 0.0,
        # n and m chosen so the estimated log-SL noise at the posterior
        # mode has sd ~1.5: small enough for the pseudo-marginal chain to
        # mix, large enough that the S3-incompatibility is decisive.
        "n": 500,
        "m": 400,
        "m_rbsl": 50,
        "n_iter": 20000,
        "burn_in": 3000,
        "proposal_sd": [0.02, 0.02, 0.1],
        "n_rep_ppc": 1000,
        "n_rep_bootvar": 200,
        "block_len": 10,
        "n_boot": 500,
        "w_scale_power": 2,
        "threads": 1,
    },
    "abc-contrast": {
        "n": 1000,
        "n_sims": 100000,
        "keep_frac": 0.005,
        "n_grid": 2001,
        "sv": SV_DEFAULT,
        "threads": 1,
    },
    "bvm-check": {
        "score_settings": [
            {"s0": 0.5, "s1": 0.0, "n": 1000},
            {"s0": 0.99, "s1": 0.0, "n": 500},
            {"s0": 0.25, "s1": 0.0, "n": 2000},
        ],
        "shape_n_values": [500, 1000, 4000],
        "s0": 0.99,
        "s1": 0.0,
        "n_grid": 4001,
        "threads": 1,
    },
}


def _flat_prior(theta) -> float:
    th = float(np.atleast_1d(theta)[0])
    return 0.0 if -1.0 < th < 1.0 else -math.inf


def _gk_flat_prior(theta) -> float:
    a, b, g = (float(v) for v in np.atleast_1d(theta)[:3])
    ok = -1.0 <= a <= 1.0 and 0.0 < b <= 1.0 and -5.0 <= g <= 5.0
    return 0.0 if ok else -math.inf


def _ma1_grad(theta):
    th = float(np.atleast_1d(theta)[0])
    return np.array([[2.0 * th], [1.0]])


def _fmt(x) -> str:
    return repr(float(x))


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _pmap(fn, items, threads: int):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# keys whose dict schema depends on a sibling value (e.g. `params` depends
# on `model`), so overrides replace them wholesale instead of merging
_FREEFORM_KEYS = {"simulate": {"params"}}


def load_config(subcommand: str, config_path, overrides, seed, threads):
    """Resolve defaults <- file <- --set overrides; unknown keys rejected."""
    if subcommand not in DEFAULTS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    cfg = json.loads(json.dumps(DEFAULTS[subcommand]))  # deep copy
    cfg["seed"] = 0
    file_cfg = {}
    if config_path:
        with open(config_path, "r", encoding="utf-8") as fh:
            file_cfg = json.load(fh)
    merged_overrides = dict(file_cfg)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, _, raw = item.partition("=")
        try:
            merged_overrides[key] = json.loads(raw)
        except json.JSONDecodeError:
            merged_overrides[key] = raw
    for key, value in merged_overrides.items():
        if key not in cfg:
            raise ConfigError(f"unknown config key {key!r} for {subcommand}")
        if key in _FREEFORM_KEYS.get(subcommand, ()):
            cfg[key] = value
        elif isinstance(cfg[key], dict) and isinstance(value, dict):
            for sub in value:
                if sub not in cfg[key]:
                    raise ConfigError(f"unknown config key {key}.{sub!r}")
            cfg[key].update(value)
        else:
            cfg[key] = value
    if seed is not None:
        cfg["seed"] = int(seed)
    if threads is not None:
        cfg["threads"] = int(threads)
    return cfg


def write_manifest(outdir: Path, subcommand: str, cfg) -> None:
    blob = json.dumps(cfg, sort_keys=True).encode("utf-8")
    manifest = {
        "subcommand": subcommand,
        "config": cfg,
        "config_sha256": hashlib.sha256(blob).hexdigest(),
        "seed": cfg.get("seed", 0),
        "versions": {
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "synlik": __version__,
        },
    }
    with open(outdir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def ingest_returns(path, column: str, log_returns: bool = False, min_rows: int = 2) -> TimeSeries:
    """Read one numeric column of a headed CSV into a TimeSeries; with
    ``log_returns`` the column is treated as prices and differenced on the
    log scale (length n-1)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DomainError(f"{path}: empty file, missing header at line 1")
        if all(_is_number(c) for c in header):
            raise DomainError(f"{path}: line 1 looks numeric, missing header row")
        if column not in header:
            raise DomainError(f"{path}: no column named {column!r} in header {header}")
        j = header.index(column)
        values = []
        for i, row in enumerate(reader, start=2):
            cell = row[j] if j < len(row) else ""
            if not _is_number(cell):
                raise DomainError(f"{path}: non-numeric cell {cell!r} at row {i}")
            values.append(float(cell))
    arr = np.asarray(values, dtype=float)
    if log_returns:
        if np.any(arr <= 0.0):
            raise DomainError("log-return transform needs strictly positive prices")
        arr = np.diff(np.log(arr))
    if arr.shape[0] < min_rows:
        raise DomainError(f"need at least {min_rows} rows, got {arr.shape[0]}")
    return TimeSeries(arr)


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


# ---------------------------------------------------------------------------
# subcommand handlers
# ---------------------------------------------------------------------------


def _sv_series(cfg_sv, n: int, seed) -> np.ndarray:
    params = SvParams(cfg_sv["omega"], cfg_sv["rho"], cfg_sv["sigma_v"])
    return sv_batch(params, 1, n, make_rng(seed))[0]


def run_simulate(cfg, outdir: Path) -> None:
    n, seed = int(cfg["n"]), cfg["seed"]
    model, p = cfg["model"], cfg["params"]
    if model == "sv":
        ts = simulate_sv(SvParams(p["omega"], p["rho"], p["sigma_v"]), n, seed)
    elif model == "ma1":
        ts = simulate_ma1(Ma1Params(p["theta"]), n, seed)
    elif model == "gk":
        ts = simulate_gk(GkParams(p["A"], p["B"], p["g"], p["k"]), n, seed)
    else:
        raise ConfigError(f"unknown model {model!r}")
    _write_csv(outdir / "series.csv", ["t", "y"], ((t, _fmt(v)) for t, v in enumerate(ts.values)))


def run_exact_posterior(cfg, outdir: Path) -> None:
    grid = np.linspace(-0.999, 0.999, int(cfg["n_grid"]))
    if cfg["mode"] == "fig2":
        for s0 in cfg["s0_values"]:
            for n in cfg["n_values"]:
                s_obs = np.array([float(s0), float(cfg["s1"])])
                post = grid_posterior(
                    lambda th: ma1_exact_loglik(th, s_obs, int(n)), _flat_prior, grid
                )
                post.to_csv(outdir / f"fig2_s{s0}_n{n}.csv")
        return
    if cfg["mode"] != "fig1":
        raise ConfigError(f"unknown mode {cfg['mode']!r}")
    n = int(cfg["n"])
    rows, errors = [], []

    def one(rep):
        seed = child_seed(cfg["seed"], "fig1", rep)
        y = _sv_series(cfg["sv"], n, seed)
        s_obs = autocov_summaries(y)
        post = grid_posterior(lambda th: ma1_exact_loglik(th, s_obs, n), _flat_prior, grid)
        return rep, post

    for rep, post in _pmap(one, range(int(cfg["n_reps"])), int(cfg["threads"])):
        for t, d in zip(post.grid, post.density):
            rows.append((rep, _fmt(t), _fmt(d)))
    _write_csv(outdir / "fig1.csv", ["rep", "theta", "density"], rows)
    if errors:
        _write_csv(outdir / "errors.csv", ["rep", "error"], errors)
        raise SynlikError(f"{len(errors)} replications failed; see errors.csv")


def run_temper(cfg, outdir: Path) -> None:
    grid = np.linspace(-0.999, 0.999, int(cfg["n_grid"]))
    for n in cfg["n_values"]:
        n = int(n)
        y = _sv_series(cfg["sv"], n, child_seed(cfg["seed"], "temper", n))
        s_obs = autocov_summaries(y)
        for alpha in cfg["alphas"]:
            post = grid_posterior(
                lambda th: temper_logpdf(ma1_exact_loglik(th, s_obs, n), float(alpha)),
                _flat_prior,
                grid,
            )
            post.to_csv(outdir / f"fig3_alpha{alpha}_n{n}.csv")


def run_rbsl(cfg, outdir: Path) -> None:
    model = ma1_model()
    for n in cfg["n_values"]:
        n = int(n)
        y = _sv_series(cfg["sv"], n, child_seed(cfg["seed"], "rbsl-data", n))
        s_obs = autocov_summaries(y)
        # Default proposal scale tracks the broadening of the target as n
        # falls: roughly the idealized marginal sd at each sample size.
        psd = cfg["proposal_sd"]
        psd = float(psd) if psd is not None else min(0.5, max(0.05, 50.0 / n))
        chain = rbsl_mh(
            model,
            _flat_prior,
            s_obs,
            int(cfg["m"]),
            int(cfg["n_iter"]),
            psd,
            child_seed(cfg["seed"], "rbsl-chain", n),
            n=n,
            gamma_prior_mean=float(cfg["gamma_prior_mean"]),
            proposal_sd_gamma=float(cfg["proposal_sd_gamma"]),
            gamma_scans=int(cfg["gamma_scans"]),
            pilot_m=int(cfg["pilot_m"]),
            burn_in=int(cfg["burn_in"]),
        )
        chain.to_csv(outdir / f"rbsl_chain_n{n}.csv", labels=["theta"])


def run_adjust(cfg, outdir: Path) -> None:
    config = CoverageConfig(
        n_values=tuple(int(n) for n in cfg["n_values"]),
        n_reps=int(cfg["n_reps"]),
        sv=SvParams(cfg["sv"]["omega"], cfg["sv"]["rho"], cfg["sv"]["sigma_v"]),
        master_seed=cfg["seed"],
        n_draws=int(cfg["n_draws"]),
        bootstrap=BootstrapSpec(block_len=int(cfg["block_len"]), n_boot=int(cfg["n_boot"])),
        w_scale_power=int(cfg["w_scale_power"]),
    )
    coverage_rows_to_csv(coverage_experiment(config), outdir / "table1.csv")


def run_hessian_scan(cfg, outdir: Path) -> None:
    grid = np.linspace(-0.99, 0.99, int(cfg["n_grid"]))
    for s0 in cfg["s0_values"]:
        s_obs = np.array([float(s0), float(cfg["s1"])])
        scan = hessian_scan(s_obs, int(cfg["n"]), grid)
        scan.to_csv(outdir / f"hessian_scan_s{s0}_n{cfg['n']}.csv")


def _gk_mean_gradient(model, theta_bar, m: int, n: int, seed) -> np.ndarray:
    """Central differences of the estimated summary means in (A, B, g)."""
    theta_bar = np.asarray(theta_bar, dtype=float)
    cols = []
    for j in range(3):
        h = 1e-2 * max(1.0, abs(theta_bar[j]))
        up, dn = theta_bar.copy(), theta_bar.copy()
        up[j] += h
        dn[j] -= h
        mu_up = estimate_sl(model, up, m, n, make_rng(seed, "grad", j, "+")).mean
        mu_dn = estimate_sl(model, dn, m, n, make_rng(seed, "grad", j, "-")).mean
        cols.append((mu_up - mu_dn) / (2.0 * h))
    return np.stack(cols, axis=1)


def _gk_pilot_mode(model, s_obs, n, seed, m=500):
    """Multi-start Nelder-Mead mode search on a fixed-seed estimated log-SL.

    Fixing the simulation seed makes the objective deterministic and (for
    the quantile-based sampler) smooth in theta. The target is multimodal
    in g with deep valleys between basins, so a random-walk chain started
    in the wrong basin never crosses; starting every chain at the best of
    several g-starts keeps it in the dominant mode.
    """
    from scipy.optimize import minimize

    s_obs = np.asarray(s_obs, dtype=float)

    def negll(th):
        if not model.in_support(th):
            return 1e9
        try:
            est = estimate_sl(model, th, m, n, seed)
            return -sl_logpdf(est.mean, est.cov, s_obs)
        except SynlikError:
            return 1e9

    a0 = float(s_obs[0])
    b0 = min(1.0, max(0.02, float(s_obs[1]) / 1.35))
    best = None
    for g0 in (0.5, 1.0, 2.0, 3.0):
        r = minimize(
            negll,
            [a0, b0, g0],
            method="Nelder-Mead",
            options={"xatol": 1e-3, "fatol": 1e-2, "maxiter": 300},
        )
        if best is None or r.fun < best.fun:
            best = r
    return np.asarray(best.x, dtype=float)


def run_gk(cfg, outdir: Path) -> None:
    n, seed = int(cfg["n"]), cfg["seed"]
    t = cfg["true"]
    data = simulate_gk(
        GkParams(t["A"], t["B"], t["g"], t["k"]), n, child_seed(seed, "gk-data")
    ).values
    theta_true = np.array([t["A"], t["B"], t["g"]])
    boot = BootstrapSpec(
        block_len=int(cfg["block_len"]), n_boot=int(cfg["n_boot"]),
        seed=child_seed(seed, "gk-boot"),
    )
    kldn_rows = []
    chains = {}
    for set_name, include_tail in (("S1", False), ("S2", True)):
        model = gk_model(k=float(cfg["fit_k"]), include_tail=include_tail)
        summary_fn = lambda y, it=include_tail: gk_summaries(y, include_tail=it)
        s_obs = summary_fn(data)
        theta_init = _gk_pilot_mode(
            model, s_obs, n, child_seed(seed, "gk-pilot", set_name)
        )
        chain = bsl_rwmh(
            model,
            _gk_flat_prior,
            s_obs,
            int(cfg["m"]),
            int(cfg["n_iter"]),
            np.asarray(cfg["proposal_sd"], dtype=float),
            child_seed(seed, "gk-bsl", set_name),
            n=n,
            theta_init=theta_init,
            burn_in=int(cfg["burn_in"]),
        )
        chains[set_name] = chain
        chain.to_csv(outdir / f"gk_chain_{set_name}.csv", labels=["A", "B", "g"])
        ppc = posterior_predictive_check(
            chain, model, summary_fn, s_obs, int(cfg["n_rep_ppc"]),
            child_seed(seed, "gk-ppc", set_name), n=n,
        )
        ppc.to_csv(outdir / f"gk_ppc_standard_{set_name}.csv")
        d = s_obs.shape[0]
        _write_csv(
            outdir / f"gk_observed_{set_name}.csv",
            ["summary", "observed", "tail_prob"],
            [
                (f"S{j + 1}", _fmt(s_obs[j]), _fmt(ppc.tail_probs[j]))
                for j in range(d)
            ],
        )
        # two-step adjustment of the standard chain, then KLDN per parameter
        theta_bar = chain.draws.mean(axis=0)
        omega = np.cov(chain.draws, rowvar=False, ddof=1)
        sigma_bar = estimate_sl(
            model, theta_bar, 2000, n, make_rng(seed, "gk-sigma", set_name)
        ).cov
        G = _gk_mean_gradient(model, theta_bar, 2000, n, child_seed(seed, "gk-grad", set_name))
        v_hat = n * block_bootstrap_cov(data, summary_fn, boot)
        w_hat = sandwich_w(G, n * sigma_bar, v_hat)
        w_used = float(n) ** int(cfg["w_scale_power"]) * w_hat
        adjusted = adjust_draws(chain.draws, theta_bar, omega, w_used)
        report = kldn_report(chain.draws, adjusted)
        for j, name in enumerate(("A", "B", "g")):
            kldn_rows.append(
                (
                    set_name,
                    name,
                    _fmt(report.values[j]),
                    _fmt(report.mu_S[j]),
                    _fmt(report.sd_S[j]),
                    _fmt(report.mu_A[j]),
                    _fmt(report.sd_A[j]),
                )
            )
    _write_csv(
        outdir / "gk_kldn.csv",
        ["summary_set", "param", "kldn", "mu_S", "sd_S", "mu_A", "sd_A"],
        kldn_rows,
    )
    # robust BSL with variance inflation on the full summary set
    model2 = gk_model(k=float(cfg["fit_k"]), include_tail=True)
    s_obs2 = gk_summaries(data, include_tail=True)
    theta_init2 = _gk_pilot_mode(model2, s_obs2, n, child_seed(seed, "gk-pilot", "S2"))
    rchain = rbsl_mh(
        model2,
        _gk_flat_prior,
        s_obs2,
        int(cfg["m_rbsl"]),
        int(cfg["n_iter"]),
        np.asarray(cfg["proposal_sd"], dtype=float),
        child_seed(seed, "gk-rbsl"),
        n=n,
        theta_init=theta_init2,
        burn_in=int(cfg["burn_in"]),
    )
    rchain.to_csv(outdir / "gk_gamma_chain.csv", labels=["A", "B", "g"])
    departures = gamma_departure(rchain, prior_mean=0.5)
    _write_csv(
        outdir / "gk_gamma_departure.csv",
        ["gamma_index", "ks_distance"],
        [(j, _fmt(dist)) for j, dist in departures],
    )
    rppc = posterior_predictive_check(
        rchain, model2, lambda y: gk_summaries(y, include_tail=True), s_obs2,
        int(cfg["n_rep_ppc"]), child_seed(seed, "gk-rppc"), n=n,
    )
    rppc.to_csv(outdir / "gk_ppc_rbsl.csv")
    _write_csv(
        outdir / "gk_observed_rbsl.csv",
        ["summary", "observed", "tail_prob"],
        [
            (f"S{j + 1}", _fmt(s_obs2[j]), _fmt(rppc.tail_probs[j]))
            for j in range(4)
        ],
    )
    from .diagnostics import bootstrap_variance_check

    bv = bootstrap_variance_check(
        data,
        lambda y: gk_summaries(y, include_tail=True),
        chains["S2"],
        model2,
        boot,
        n_rep=int(cfg["n_rep_bootvar"]),
        seed=child_seed(seed, "gk-bootvar"),
    )
    _write_csv(
        outdir / "gk_bootvar.csv",
        ["rep", "S1", "S2", "S3", "S4"],
        [
            (i, *(_fmt(v) for v in row))
            for i, row in enumerate(bv.predictive_var)
        ],
    )
    _write_csv(
        outdir / "gk_bootvar_observed.csv",
        ["summary", "observed_var", "tail_prob", "flagged"],
        [
            (f"S{j + 1}", _fmt(bv.observed_var[j]), _fmt(bv.tail_probs[j]), int(bv.flagged[j]))
            for j in range(4)
        ],
    )


def run_abc_contrast(cfg, outdir: Path) -> None:
    n = int(cfg["n"])
    y = _sv_series(cfg["sv"], n, child_seed(cfg["seed"], "abc-data"))
    s_obs = autocov_summaries(y)
    model = ma1_model()

    def prior_sampler(size, rng):
        return rng.uniform(-1.0, 1.0, size=(size, 1))

    accepted = rejection_abc(
        model, prior_sampler, s_obs, int(cfg["n_sims"]), float(cfg["keep_frac"]),
        child_seed(cfg["seed"], "abc"), n=n,
    )
    _write_csv(outdir / "abc_accepted.csv", ["theta"], [(_fmt(t[0]),) for t in accepted])
    grid = np.linspace(-0.999, 0.999, int(cfg["n_grid"]))
    post = grid_posterior(lambda th: ma1_exact_loglik(th, s_obs, n), _flat_prior, grid)
    post.to_csv(outdir / "abc_exact_posterior.csv")


def run_bvm_check(cfg, outdir: Path) -> None:
    rows = []
    for setting in cfg["score_settings"]:
        s_obs = np.array([float(setting["s0"]), float(setting["s1"])])
        n = int(setting["n"])
        for theta in np.linspace(-0.98, 0.98, 99):
            rep = sl_score_ma1(theta, s_obs, n)
            h = 1e-5 * max(1.0, abs(theta))
            fd = (
                ma1_exact_loglik(theta + h, s_obs, n)
                - ma1_exact_loglik(theta - h, s_obs, n)
            ) / (2.0 * h * n)
            rows.append(
                (
                    _fmt(setting["s0"]), n, _fmt(theta), _fmt(rep.score), _fmt(fd),
                    _fmt(abs(rep.score - fd) / max(1e-12, abs(fd))),
                )
            )
    _write_csv(
        outdir / "bvm_scores.csv",
        ["s0", "n", "theta", "score", "fd_score", "rel_err"],
        rows,
    )
    s_obs = np.array([float(cfg["s0"]), float(cfg["s1"])])
    shape_rows, l1_rows = [], []
    for n in cfg["shape_n_values"]:
        n = int(n)
        grid = np.linspace(-0.999, 0.999, int(cfg["n_grid"]))
        post = grid_posterior(lambda th: ma1_exact_loglik(th, s_obs, n), _flat_prior, grid)
        roots = find_roots(lambda th: ma1_score_value(th, s_obs, n), np.linspace(-0.99, 0.99, 199))
        for root, hess, is_max in roots.roots:
            if not is_max:
                continue
            dh, dref, disc = local_shape_check(post, root, 0.1, n, hess)
            shape_rows.append((n, _fmt(root), _fmt(dh), _fmt(dref), _fmt(disc)))
            l1_rows.append((n, _fmt(t_weighted_l1(post, root, n, dref))))
    _write_csv(
        outdir / "bvm_shape.csv",
        ["n", "root", "delta_hat", "delta_hessian", "discrepancy"],
        shape_rows,
    )
    _write_csv(outdir / "bvm_l1.csv", ["n", "l1"], l1_rows)


HANDLERS = {
    "simulate": run_simulate,
    "exact-posterior": run_exact_posterior,
    "temper": run_temper,
    "rbsl": run_rbsl,
    "adjust": run_adjust,
    "hessian-scan": run_hessian_scan,
    "gk": run_gk,
    "abc-contrast": run_abc_contrast,
    "bvm-check": run_bvm_check,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="synlik", description="synthetic-likelihood experiment runner"
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in HANDLERS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument(
            "--set", action="append", default=[], metavar="KEY=VALUE",
            help="override a config key (value parsed as JSON when possible)",
        )
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="master seed")
        p.add_argument("--threads", type=int, default=None, help="worker pool size")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = args.out or os.environ.get("SYNLIK_OUT") or f"artifacts/{args.subcommand}"
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    try:
        cfg = load_config(args.subcommand, args.config, args.set, args.seed, args.threads)
        HANDLERS[args.subcommand](cfg, outdir)
        write_manifest(outdir, args.subcommand, cfg)
    except Exception as exc:
        record = {"error": str(exc), "type": type(exc).__name__}
        with open(outdir / "error.json", "w", encoding="utf-8") as fh:
            json.dump(record, fh, indent=2)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
