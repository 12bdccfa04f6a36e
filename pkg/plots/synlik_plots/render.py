"""Render publication-style figures from the experiment CSV artifacts.

The renderer is a read-only consumer: every figure is a pure function of
the CSV contents in the artifact directory.  ``build_figure`` returns a
matplotlib Figure; the ``render`` console script saves it to a file.

Figure ids:
  1  replicated exact posterior densities (one curve per dataset)
  2  exact posteriors across misspecification levels, one panel per level,
     one line style per sample size
  3  tempered vs untempered exact posteriors
  4  robust-chain marginal densities, one line style per sample size
  5  naive vs adjusted replication summaries (mean / variance / coverage)
  6  inflation-component posteriors with their prior (dashed)
  7  posterior predictive histograms with observed-value markers
  8  log synthetic likelihood and its curvature across the parameter range

Chain-based marginals use a Gaussian kernel density with Silverman
bandwidth; grid densities are drawn directly from the CSV values.
"""

import argparse
import csv
import re
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from scipy.stats import gaussian_kde

LINESTYLES = ["-", "--", ":", "-."]


class SchemaError(Exception):
    """An artifact file is missing or does not match its declared schema."""


def _read_table(path: Path, numeric_columns, string_columns=()):
    """CSV file -> dict of column arrays; names the file and column on error."""
    if not path.is_file():
        raise SchemaError(f"missing artifact {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaError(f"{path.name}: empty file")
    header, body = rows[0], rows[1:]
    out = {}
    for col in list(numeric_columns) + list(string_columns):
        if col not in header:
            raise SchemaError(f"{path.name}: missing column {col!r}")
    for col in string_columns:
        i = header.index(col)
        out[col] = [row[i] for row in body]
    for col in numeric_columns:
        i = header.index(col)
        try:
            out[col] = np.array([float(row[i]) for row in body])
        except (ValueError, IndexError) as exc:
            raise SchemaError(f"{path.name}: non-numeric value in column {col!r}") from exc
    return out


def _glob_parse(artifact_dir: Path, pattern: str, regex: str):
    """Matching files with their regex capture groups, sorted by the groups."""
    found = []
    for path in sorted(artifact_dir.glob(pattern)):
        match = re.fullmatch(regex, path.name)
        if match:
            found.append((tuple(float(g) for g in match.groups()), path))
    if not found:
        raise SchemaError(f"no artifacts matching {pattern!r} in {artifact_dir}")
    found.sort(key=lambda item: item[0])
    return found


def _silverman_density(draws: np.ndarray, grid: np.ndarray) -> np.ndarray:
    return gaussian_kde(draws, bw_method="silverman")(grid)


def _fig_replicated_posteriors(artifact_dir: Path):
    table = _read_table(artifact_dir / "fig1.csv", ["rep", "theta", "density"])
    fig, ax = plt.subplots(figsize=(6, 4))
    for rep in np.unique(table["rep"]):
        mask = table["rep"] == rep
        ax.plot(table["theta"][mask], table["density"][mask], color="k", lw=0.5, alpha=0.5)
    ax.set_xlabel(r"$\theta$")
    ax.set_ylabel("posterior density")
    ax.set_title("Exact posteriors across replicated misspecified datasets")
    return fig


def _fig_regime_panels(artifact_dir: Path):
    files = _glob_parse(
        artifact_dir, "fig2_s*_n*.csv", r"fig2_s([0-9.eE+-]+)_n(\d+)\.csv"
    )
    s0_values = sorted({k[0] for k, _ in files})
    n_values = sorted({k[1] for k, _ in files})
    ncols = 3
    nrows = max(1, -(-len(s0_values) // ncols))
    fig, axes = plt.subplots(nrows, ncols, figsize=(4 * ncols, 3 * nrows), squeeze=False)
    for idx, s0 in enumerate(s0_values):
        ax = axes[idx // ncols][idx % ncols]
        for j, n in enumerate(n_values):
            path = dict(files)[(s0, n)]
            table = _read_table(path, ["theta", "density", "log_unnorm"])
            ax.plot(
                table["theta"],
                table["density"],
                color="k",
                ls=LINESTYLES[j % len(LINESTYLES)],
                label=f"n={int(n)}",
            )
        ax.set_title(f"first summary = {s0}")
        ax.set_xlabel(r"$\theta$")
    axes[0][0].legend(fontsize=8)
    for idx in range(len(s0_values), nrows * ncols):
        axes[idx // ncols][idx % ncols].axis("off")
    fig.tight_layout()
    return fig


def _fig_tempering(artifact_dir: Path):
    files = _glob_parse(
        artifact_dir, "fig3_alpha*_n*.csv", r"fig3_alpha([0-9.eE+-]+)_n(\d+)\.csv"
    )
    fig, ax = plt.subplots(figsize=(6, 4))
    for j, ((alpha, n), path) in enumerate(sorted(files, reverse=True)):
        table = _read_table(path, ["theta", "density", "log_unnorm"])
        ax.plot(
            table["theta"],
            table["density"],
            color="k",
            ls=LINESTYLES[j % len(LINESTYLES)],
            label=rf"$\alpha$={alpha}, n={int(n)}",
        )
    ax.set_xlabel(r"$\theta$")
    ax.set_ylabel("posterior density")
    ax.set_title("Tempered vs untempered exact posteriors")
    ax.legend(fontsize=8)
    return fig


def _fig_robust_chains(artifact_dir: Path):
    files = _glob_parse(artifact_dir, "rbsl_chain_n*.csv", r"rbsl_chain_n(\d+)\.csv")
    grid = np.linspace(-1, 1, 512)
    fig, ax = plt.subplots(figsize=(6, 4))
    for j, ((n,), path) in enumerate(files):
        table = _read_table(path, ["iter", "theta", "loglik", "accepted"])
        draws = table["theta"][len(table["theta"]) // 5 :]
        ax.plot(
            grid,
            _silverman_density(draws, grid),
            color="k",
            ls=LINESTYLES[j % len(LINESTYLES)],
            label=f"n={int(n)}",
        )
    ax.set_xlabel(r"$\theta$")
    ax.set_ylabel("marginal density")
    ax.set_title("Robust (variance-inflated) chain marginals")
    ax.legend(fontsize=8)
    return fig


def _fig_replication_summaries(artifact_dir: Path):
    table = _read_table(
        artifact_dir / "table1.csv", ["n", "mean_x1000", "var", "cov"], ["method"]
    )
    methods = sorted(set(table["method"]))
    n_values = sorted(set(table["n"]))
    panels = [("mean_x1000", "posterior mean x 1000"), ("var", "posterior variance"), ("cov", "interval coverage")]
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.5))
    width = 0.8 / len(methods)
    x = np.arange(len(n_values))
    for ax, (col, label) in zip(axes, panels):
        for j, method in enumerate(methods):
            vals = [
                table[col][i]
                for n in n_values
                for i in range(len(table["method"]))
                if table["method"][i] == method and table["n"][i] == n
            ]
            ax.bar(x + j * width, vals, width, label=method)
        ax.set_xticks(x + width * (len(methods) - 1) / 2)
        ax.set_xticklabels([f"n={int(n)}" for n in n_values])
        ax.set_title(label)
    axes[0].legend(fontsize=8)
    fig.tight_layout()
    return fig


def _fig_gamma_overlays(artifact_dir: Path, prior_mean: float = 0.5):
    path = artifact_dir / "gk_gamma_chain.csv"
    if not path.is_file():
        raise SchemaError(f"missing artifact {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        header = next(csv.reader(fh))
    gamma_cols = [c for c in header if c.startswith("gamma")]
    if not gamma_cols:
        raise SchemaError(f"{path.name}: missing column 'gamma0'")
    table = _read_table(path, gamma_cols)
    fig, axes = plt.subplots(1, len(gamma_cols), figsize=(3.2 * len(gamma_cols), 3))
    axes = np.atleast_1d(axes)
    for ax, col in zip(axes, gamma_cols):
        draws = table[col][len(table[col]) // 5 :]
        hi = max(1e-6, float(np.quantile(draws, 0.999))) * 1.3
        grid = np.linspace(0, hi, 512)
        ax.plot(grid, _silverman_density(draws, grid), color="k", ls="-", label="posterior")
        ax.plot(
            grid,
            np.exp(-grid / prior_mean) / prior_mean,
            color="k",
            ls="--",
            label="prior",
        )
        ax.set_title(rf"$\gamma_{{{col[len('gamma'):]}}}$")
    axes[0].legend(fontsize=8)
    fig.tight_layout()
    return fig


def _fig_predictive_checks(artifact_dir: Path):
    fits = [
        ("standard, compatible summaries", "gk_ppc_standard_S1.csv", "gk_observed_S1.csv"),
        ("standard, full summaries", "gk_ppc_standard_S2.csv", "gk_observed_S2.csv"),
        ("robust, full summaries", "gk_ppc_rbsl.csv", "gk_observed_rbsl.csv"),
    ]
    rows = []
    for title, ppc_name, obs_name in fits:
        obs = _read_table(artifact_dir / obs_name, ["observed", "tail_prob"], ["summary"])
        ppc = _read_table(artifact_dir / ppc_name, list(obs["summary"]))
        rows.append((title, obs, ppc))
    ncols = max(len(row[1]["summary"]) for row in rows)
    fig, axes = plt.subplots(len(rows), ncols, figsize=(2.8 * ncols, 2.6 * len(rows)), squeeze=False)
    for i, (title, obs, ppc) in enumerate(rows):
        for j in range(ncols):
            ax = axes[i][j]
            if j >= len(obs["summary"]):
                ax.axis("off")
                continue
            name = obs["summary"][j]
            ax.hist(ppc[name], bins=25, color="0.7")
            ax.axvline(obs["observed"][j], color="k", lw=1.5)
            ax.plot([obs["observed"][j]], [0], "ko", clip_on=False)
            ax.set_title(f"{name} ({title})", fontsize=8)
    fig.tight_layout()
    return fig


def _fig_curvature_scan(artifact_dir: Path):
    files = _glob_parse(
        artifact_dir, "hessian_scan_s*_n*.csv", r"hessian_scan_s([0-9.eE+-]+)_n(\d+)\.csv"
    )
    fig, axes = plt.subplots(2, len(files), figsize=(4.5 * len(files), 6), squeeze=False)
    for j, ((s0, n), path) in enumerate(files):
        table = _read_table(path, ["theta", "log_sl", "score", "hessian", "is_mode"])
        top, bottom = axes[0][j], axes[1][j]
        top.plot(table["theta"], table["log_sl"], color="k")
        modes = table["is_mode"] > 0
        top.plot(table["theta"][modes], table["log_sl"][modes], "ko")
        top.set_title(f"log SL, first summary = {s0}, n={int(n)}")
        bottom.plot(table["theta"], table["hessian"], color="k")
        bottom.axhline(0.0, color="k", lw=0.5, ls=":")
        bottom.set_title("curvature")
        bottom.set_xlabel(r"$\theta$")
    fig.tight_layout()
    return fig


BUILDERS = {
    1: _fig_replicated_posteriors,
    2: _fig_regime_panels,
    3: _fig_tempering,
    4: _fig_robust_chains,
    5: _fig_replication_summaries,
    6: _fig_gamma_overlays,
    7: _fig_predictive_checks,
    8: _fig_curvature_scan,
}


def build_figure(figure_id: int, artifact_dir):
    """Build figure ``figure_id`` (1-8) from the CSVs in ``artifact_dir``."""
    figure_id = int(figure_id)
    if figure_id not in BUILDERS:
        raise SchemaError(f"unknown figure id {figure_id}; expected 1-8")
    return BUILDERS[figure_id](Path(artifact_dir))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="render", description="render one figure from experiment CSV artifacts"
    )
    parser.add_argument("figure_id", type=int, help="figure id, 1-8")
    parser.add_argument("artifact_dir", help="directory holding the CSV artifacts")
    parser.add_argument("out_path", help="image file to write (format from extension)")
    args = parser.parse_args(argv)
    try:
        fig = build_figure(args.figure_id, args.artifact_dir)
    except SchemaError as exc:
        print(f"render: {exc}", file=sys.stderr)
        return 2
    fig.savefig(args.out_path, dpi=120)
    plt.close(fig)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
