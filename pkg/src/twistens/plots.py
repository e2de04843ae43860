"""Figure rendering for the command-line reports.

Every figure goes through _save, which strips timestamps from the PNG
metadata and stamps the config hash instead, so rerunning a command yields
byte-identical images.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .phase import action_angle_to_canonical

_DPI = 150


def _save(fig, path, config_hash: str, master_seed: int):
    meta = {"Software": "twistens", "config_hash": config_hash,
            "master_seed": str(master_seed)}
    fig.savefig(path, dpi=_DPI, metadata=meta)
    plt.close(fig)


def _logish(ax, x):
    # log x axis only if the grid spans decades and excludes 0
    x = np.asarray(x, dtype=float)
    if x.size and x.min() > 0 and x.max() / max(x.min(), 1e-300) > 30:
        ax.set_xscale("log")


def phase_clouds(path, j_values, actions, angles, config_hash, master_seed,
                 max_points: int = 20000):
    """Scatter of the ensemble in (q, p) at each snapshot step."""
    j_values = list(j_values)
    n = len(j_values)
    ncols = min(3, n)
    nrows = (n + ncols - 1) // ncols
    fig, axes = plt.subplots(nrows, ncols, figsize=(3.2 * ncols, 3.2 * nrows),
                             squeeze=False)
    sel = slice(None) if actions.size <= max_points else slice(0, max_points)
    for idx, j in enumerate(j_values):
        ax = axes[idx // ncols][idx % ncols]
        q, p = action_angle_to_canonical(actions[sel], angles[sel, idx])
        ax.plot(q, p, ",", alpha=0.35, rasterized=True)
        ax.set_title(f"j = {j}", fontsize=9)
        ax.set_aspect("equal")
        ax.set_xlabel("q", fontsize=8)
        ax.set_ylabel("p", fontsize=8)
    for idx in range(n, nrows * ncols):
        axes[idx // ncols][idx % ncols].axis("off")
    fig.tight_layout()
    _save(fig, path, config_hash, master_seed)


def centroid_decay(path, j_values, norms, stderr, config_hash, master_seed,
                   oracle_norms=None):
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    j = np.asarray(j_values, dtype=float)
    pos = j > 0
    ax.errorbar(j[pos], np.asarray(norms)[pos], yerr=np.asarray(stderr)[pos],
                fmt="o", ms=4, capsize=2, label="ensemble")
    if oracle_norms is not None:
        ax.plot(j[pos], np.asarray(oracle_norms)[pos], "-", lw=1,
                label="mode sum")
        ax.legend(fontsize=8)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("step j")
    ax.set_ylabel("centroid magnitude")
    fig.tight_layout()
    _save(fig, path, config_hash, master_seed)


def oracle_decay(path, j_values, abs_means, cesaro_abs, config_hash,
                 master_seed, envelope=None):
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.4, 3.4))
    j = np.asarray(j_values, dtype=float)
    pos = j > 0
    y = np.asarray(abs_means)[pos]
    ax1.plot(j[pos], np.maximum(y, 1e-300), ".", ms=3)
    if envelope is not None:
        ax1.plot(j[pos], np.asarray(envelope)[pos], "-", lw=1, alpha=0.7)
    ax1.set_xscale("log")
    ax1.set_yscale("log")
    ax1.set_xlabel("step j")
    ax1.set_ylabel("|mean|")
    N = np.arange(1, len(cesaro_abs) + 1, dtype=float)
    ax2.plot(N, np.maximum(np.asarray(cesaro_abs), 1e-300), "-", lw=1)
    ax2.set_xscale("log")
    ax2.set_yscale("log")
    ax2.set_xlabel("N")
    ax2.set_ylabel("|Cesaro avg - limit|")
    fig.tight_layout()
    _save(fig, path, config_hash, master_seed)


def compare_scores(path, j_values, z_re, z_im, config_hash, master_seed,
                   gate: float = 5.0):
    fig, ax = plt.subplots(figsize=(5.2, 3.4))
    x = np.arange(len(j_values))
    ax.bar(x - 0.18, z_re, width=0.36, label="Re")
    ax.bar(x + 0.18, z_im, width=0.36, label="Im")
    ax.axhline(gate, color="k", lw=0.8, ls="--")
    ax.axhline(-gate, color="k", lw=0.8, ls="--")
    ax.set_xticks(x, [str(j) for j in j_values], fontsize=8)
    ax.set_xlabel("step j")
    ax.set_ylabel("z score")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path, config_hash, master_seed)


def clt_figure(path, samples, sigma_star, config_hash, master_seed):
    """Histogram plus ECDF-vs-normal overlay for the top-rung samples."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.4, 3.4))
    s = np.sort(np.asarray(samples, dtype=float))
    z = s / sigma_star if sigma_star > 0 else s
    ax1.hist(z, bins=60, density=True, alpha=0.7)
    grid = np.linspace(-4, 4, 401)
    ax1.plot(grid, np.exp(-grid ** 2 / 2) / np.sqrt(2 * np.pi), "k-", lw=1)
    ax1.set_xlabel("standardized sum")
    ax1.set_ylabel("density")
    ecdf = np.arange(1, z.size + 1) / z.size
    ax2.plot(z, ecdf, "-", lw=1, label="ECDF")
    from scipy.special import ndtr
    ax2.plot(z, ndtr(z), "k--", lw=1, label="normal")
    ax2.set_xlabel("standardized sum")
    ax2.set_ylabel("CDF")
    ax2.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path, config_hash, master_seed)


def covariance_figure(path, lags, config_hash, master_seed, stderr=None,
                      oracle=None, fit=None):
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.4, 3.4))
    h = np.arange(1, len(lags) + 1)
    if stderr is not None:
        ax1.errorbar(h, lags, yerr=stderr, fmt="o", ms=4, capsize=2,
                     label="ensemble")
    else:
        ax1.plot(h, lags, "o", ms=4, label="ensemble")
    if oracle is not None:
        ax1.plot(h, oracle, "k-", lw=1, label="mode sum")
    ax1.axhline(0.0, color="gray", lw=0.6)
    ax1.set_xlabel("lag h")
    ax1.set_ylabel("avg lag covariance")
    ax1.legend(fontsize=8)
    ax2.plot(h, np.maximum(np.abs(lags), 1e-300), "o", ms=4)
    if fit is not None and fit.rate is not None:
        ax2.plot(h, fit.prefactor * np.exp(-fit.rate * h), "k--", lw=1,
                 label=f"rate {fit.rate:.4f}")
        ax2.legend(fontsize=8)
    ax2.set_yscale("log")
    ax2.set_xlabel("lag h")
    ax2.set_ylabel("|avg lag covariance|")
    fig.tight_layout()
    _save(fig, path, config_hash, master_seed)


def counterexample_figure(path, N_values, resonant_gap, control_gap,
                          config_hash, master_seed):
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    N = np.asarray(N_values, dtype=float)
    ax.plot(N, np.maximum(np.asarray(resonant_gap), 1e-300), "o-", ms=4,
            label="resonant")
    ax.plot(N, np.maximum(np.asarray(control_gap), 1e-300), "s--", ms=4,
            label="independent control")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("N")
    ax.set_ylabel("|Cesaro avg - limit|")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path, config_hash, master_seed)


def nonresonance_figure(path, grid, margins, config_hash, master_seed):
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    ax.plot(grid, margins, "-", lw=1)
    ax.set_yscale("log")
    ax.set_xlabel("action I")
    ax.set_ylabel("min distance of k*omega to 2*pi*Z")
    fig.tight_layout()
    _save(fig, path, config_hash, master_seed)
