"""Command-line entry points.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical gate
failure (a comparison or acceptance threshold missed), 4 output I/O failure.
Every output file carries the config hash and master seed: CSVs in a leading
comment line, JSON as top-level keys, figures in the PNG metadata.  Nothing
written depends on the thread count or the wall clock.
"""
from __future__ import annotations

import dataclasses
import functools
import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from .config import ExperimentConfig, load_config, load_preset, preset_names
from .dynamics import BrownianNoise
from .engine import clt_accumulate, ensemble_snapshots, replica_matrix
from .errors import (DomainError, NumericalGateError, UnsupportedError,
                     UsageError)
from .oracle import (build_spectral_table, cesaro_ladder, cesaro_series,
                     limit_value, mean_series, oracle_avg_lag_covariance)
from .phase import action_angle_to_canonical, check_nonresonance
from .sampling import GaussianPhaseSpace
from .stats import (clt_report, estimate_lag_covariances, fit_decay,
                    mean_z_scores, rolling_max_envelope)

TAIL_GATE = 1e-2
Z_GATE = 5.0


# --------------------------------------------------------------------------- #
# shared plumbing
# --------------------------------------------------------------------------- #

def common_options(fn):
    fn = click.option("--config", "config_path", type=click.Path(), default=None,
                      help="Path to a JSON experiment config.")(fn)
    fn = click.option("--preset", type=click.Choice(preset_names()), default=None,
                      help="Name of a packaged config (alternative to --config).")(fn)
    fn = click.option("--out", "out_dir", type=click.Path(file_okay=False),
                      default=None, help="Output directory (default: config out_dir).")(fn)
    fn = click.option("--seed", type=click.IntRange(0, 2 ** 64 - 1), default=None,
                      help="Override the master seed.")(fn)
    fn = click.option("--threads", type=click.IntRange(1), default=None,
                      help="Worker threads (default: hardware parallelism).")(fn)
    fn = click.option("--full-scale", is_flag=True,
                      help="Use the config's full_scale ensemble sizes.")(fn)
    fn = click.option("--plots/--no-plots", "render_plots", default=True,
                      help="Render figures next to the delimited output.")(fn)
    return fn


def resolve(config_path, preset, seed, out_dir) -> tuple[ExperimentConfig, Path]:
    if (config_path is None) == (preset is None):
        raise UsageError("pass exactly one of --config or --preset")
    if preset is not None:
        cfg = load_preset(preset)
    else:
        try:
            cfg = load_config(config_path)
        except FileNotFoundError:
            raise UsageError(f"config file not found: {config_path}")
    if seed is not None:
        cfg = dataclasses.replace(cfg, master_seed=int(seed))
    out = Path(out_dir) if out_dir is not None else Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return cfg, out


def guarded(fn):
    @functools.wraps(fn)
    def inner(*args, **kwargs):
        try:
            code = fn(*args, **kwargs)
        except (UsageError, DomainError, UnsupportedError) as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(2)
        except NumericalGateError as e:
            click.echo(f"gate failure: {e}", err=True)
            sys.exit(3)
        except OSError as e:
            click.echo(f"i/o failure: {e}", err=True)
            sys.exit(4)
        sys.exit(int(code) if code else 0)
    return inner


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def write_csv(path: Path, columns, rows, cfg: ExperimentConfig):
    with open(path, "w") as f:
        f.write(f"# config_hash={cfg.config_hash()} master_seed={cfg.master_seed}\n")
        f.write(",".join(columns) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")


def write_matrix_csv(path: Path, columns, matrix: np.ndarray, cfg: ExperimentConfig):
    with open(path, "w") as f:
        f.write(f"# config_hash={cfg.config_hash()} master_seed={cfg.master_seed}\n")
        f.write(",".join(columns) + "\n")
        np.savetxt(f, matrix, fmt="%.17g", delimiter=",")


def write_json(path: Path, payload: dict, cfg: ExperimentConfig):
    body = {"config_hash": cfg.config_hash(), "master_seed": cfg.master_seed,
            **payload}
    with open(path, "w") as f:
        json.dump(body, f, indent=2, sort_keys=True)
        f.write("\n")


def _threads(threads) -> int:
    return int(threads) if threads is not None else (os.cpu_count() or 1)


def _centroid_norms(cfg: ExperimentConfig, mean_values) -> np.ndarray:
    # normalized by |q0| for the Gaussian cloud so j=0 starts near 1
    rho = cfg.density()
    if isinstance(rho, GaussianPhaseSpace) and rho.q0 != 0:
        return np.abs(mean_values) / abs(rho.q0)
    return np.abs(mean_values)


def _build_table(cfg: ExperimentConfig):
    return build_spectral_table(
        cfg.observable_fn(), cfg.density(), cfg.frequency_model(),
        k_max=cfg.k_max, n_nodes=cfg.I_nodes, I_max=cfg.I_max, I_min=cfg.I_min,
        theta_points=cfg.theta_points, panels=cfg.panels)


# --------------------------------------------------------------------------- #
# commands
# --------------------------------------------------------------------------- #

@click.group()
@click.version_option(package_name="twistens")
def main():
    """Ensemble simulation and spectral cross-validation for twist maps."""


@main.command()
@common_options
@guarded
def simulate(config_path, preset, out_dir, seed, threads, full_scale, render_plots):
    """Monte Carlo snapshots: phase dumps, ensemble means, energy audit."""
    cfg, out = resolve(config_path, preset, seed, out_dir)
    M = cfg.effective_M(full_scale)
    result = ensemble_snapshots(
        cfg.density(), cfg.frequency_model(), cfg.noise(), cfg.observable_fn(),
        M, cfg.snapshots, cfg.seed_plan(), threads=_threads(threads),
        keep_states=True)

    for idx, j in enumerate(result.j_values):
        q, p = action_angle_to_canonical(result.actions, result.angles[:, idx])
        block = np.column_stack([q, p, result.actions, result.angles[:, idx]])
        write_matrix_csv(out / f"phase_t{int(j)}.csv", ["q", "p", "I", "theta"],
                         block, cfg)

    norms = _centroid_norms(cfg, result.mean)
    write_csv(out / "ensemble_means.csv",
              ["j", "re_mean", "im_mean", "stderr_re", "stderr_im", "centroid_norm"],
              [(int(j), m.real, m.imag, sr, si, cn)
               for j, m, sr, si, cn in zip(result.j_values, result.mean,
                                           result.stderr_re, result.stderr_im,
                                           norms)],
              cfg)

    e_lo, e_hi = result.energy_range
    energy = {
        "mean_by_snapshot": [float(v) for v in result.mean_energy],
        "range": [float(e_lo), float(e_hi)],
        "max_drift": float(result.max_energy_drift),
    }
    if cfg.energy_level is not None:
        energy["level"] = cfg.energy_level
        energy["level_in_range"] = bool(e_lo <= cfg.energy_level <= e_hi)
    write_json(out / "run_summary.json", {
        "command": "simulate",
        "config": cfg.to_dict(),
        "count": result.count,
        "snapshots": [int(j) for j in result.j_values],
        "centroid_norm": [float(v) for v in norms],
        "energy": energy,
    }, cfg)

    if render_plots:
        from . import plots
        h, s = cfg.config_hash(), cfg.master_seed
        plots.phase_clouds(out / "phase_clouds.png", result.j_values,
                           result.actions, result.angles, h, s)
        plots.centroid_decay(out / "centroid_decay.png", result.j_values, norms,
                             np.hypot(result.stderr_re, result.stderr_im), h, s)
    click.echo(f"simulate: M={M} snapshots={list(map(int, result.j_values))} -> {out}")
    return 0


@main.command()
@common_options
@guarded
def oracle(config_path, preset, out_dir, seed, threads, full_scale, render_plots):
    """Semi-analytic mode-sum means and Cesaro averages, no sampling."""
    cfg, out = resolve(config_path, preset, seed, out_dir)
    table = _build_table(cfg)
    noise = cfg.noise()
    snaps = np.asarray(sorted(set(cfg.snapshots)), dtype=int)
    snap_means = mean_series(table, snaps, noise)
    steps = np.arange(1, cfg.N + 1)
    means = mean_series(table, steps, noise)
    ces = cesaro_series(means)
    limit = limit_value(table)

    write_csv(out / "oracle_means.csv", ["j", "re", "im"],
              [(int(j), v.real, v.imag) for j, v in zip(snaps, snap_means)], cfg)
    write_csv(out / "oracle_cesaro.csv", ["N", "re", "im", "abs"],
              [(int(n), v.real, v.imag, abs(v)) for n, v in zip(steps, ces)], cfg)

    decades = [n for n in (1, 10, 100, 1000, 10000, 100000) if n <= cfg.N]
    write_json(out / "oracle_summary.json", {
        "command": "oracle",
        "config": cfg.to_dict(),
        "limit": [limit.real, limit.imag],
        "tail_fraction": table.tail_fraction,
        "tail_gate": TAIL_GATE,
        "cesaro_gap_at": {str(n): abs(ces[n - 1] - limit) for n in decades},
    }, cfg)

    if render_plots:
        from . import plots
        plots.oracle_decay(out / "oracle_decay.png", steps, np.abs(means),
                           np.abs(ces - limit), cfg.config_hash(), cfg.master_seed,
                           envelope=rolling_max_envelope(means))
    if table.tail_fraction > TAIL_GATE:
        click.echo(f"gate failure: truncation tail {table.tail_fraction:.3e} "
                   f"exceeds {TAIL_GATE}", err=True)
        return 3
    click.echo(f"oracle: N={cfg.N} tail={table.tail_fraction:.3e} -> {out}")
    return 0


@main.command()
@common_options
@guarded
def compare(config_path, preset, out_dir, seed, threads, full_scale, render_plots):
    """Monte Carlo vs mode-sum means, gated at |z| <= 5 per snapshot."""
    cfg, out = resolve(config_path, preset, seed, out_dir)
    M = cfg.effective_M(full_scale)
    result = ensemble_snapshots(
        cfg.density(), cfg.frequency_model(), cfg.noise(), cfg.observable_fn(),
        M, cfg.snapshots, cfg.seed_plan(), threads=_threads(threads),
        keep_states=False)
    table = _build_table(cfg)
    oracle_vals = mean_series(table, result.j_values, cfg.noise())
    z_re, z_im = mean_z_scores(result, oracle_vals)
    max_z = float(max(np.abs(z_re).max(), np.abs(z_im).max()))
    passed = max_z <= Z_GATE

    write_json(out / "compare_report.json", {
        "command": "compare",
        "config": cfg.to_dict(),
        "count": M,
        "gate": Z_GATE,
        "max_abs_z": max_z,
        "passed": passed,
        "rows": [
            {"j": int(j), "mc_re": m.real, "mc_im": m.imag,
             "stderr_re": float(sr), "stderr_im": float(si),
             "oracle_re": o.real, "oracle_im": o.imag,
             "z_re": float(zr), "z_im": float(zi)}
            for j, m, sr, si, o, zr, zi in zip(
                result.j_values, result.mean, result.stderr_re, result.stderr_im,
                oracle_vals, z_re, z_im)
        ],
    }, cfg)
    if render_plots:
        from . import plots
        plots.compare_scores(out / "compare_z.png", result.j_values, z_re, z_im,
                             cfg.config_hash(), cfg.master_seed, gate=Z_GATE)
    click.echo(f"compare: M={M} max|z|={max_z:.3f} "
               f"{'OK' if passed else 'FAIL'} -> {out}")
    return 0 if passed else 3


@main.command()
@common_options
@guarded
def clt(config_path, preset, out_dir, seed, threads, full_scale, render_plots):
    """Partial-sum normality: samples, limiting variance, KS ladder."""
    cfg, out = resolve(config_path, preset, seed, out_dir)
    G = cfg.observable_fn()
    if cfg.observable != "I_cos":
        raise UsageError("partial-sum normality needs the real observable I_cos")
    R = cfg.effective_R(full_scale)
    rungs = tuple(r for r in cfg.rungs if r <= cfg.N)
    if not rungs:
        raise UsageError("no rung is <= N")
    table = _build_table(cfg)
    center = limit_value(table).real
    acc = clt_accumulate(
        cfg.density(), cfg.frequency_model(), cfg.noise(), G, R, cfg.N,
        cfg.seed_plan(), center=center, rungs=rungs, H=cfg.H,
        threads=_threads(threads))
    report = clt_report(acc, sup_bound=G.sup_bound, ks_threshold=cfg.ks_threshold)

    for i, n in enumerate(report.rungs):
        write_csv(out / f"clt_samples_N{int(n)}.csv", ["sample"],
                  [(float(v),) for v in acc.samples[:, i]], cfg)

    payload = {"command": "clt", "config": cfg.to_dict(), **report.to_jsonable()}
    if not report.degenerate:
        sigma = report.covariance.sigma_star
        top = np.sort(acc.samples[:, -1]) / sigma
        idx = np.unique(np.linspace(0, top.size - 1, 256).round().astype(int))
        payload["ecdf"] = {"rung": int(report.rungs[-1]),
                          "x": [float(v) for v in top[idx]],
                          "F": [float((i + 1) / top.size) for i in idx]}
    else:
        payload["ecdf"] = None
    write_json(out / "clt_report.json", payload, cfg)

    if render_plots and not report.degenerate:
        from . import plots
        plots.clt_figure(out / "clt_samples.png", acc.samples[:, -1],
                         report.covariance.sigma_star, cfg.config_hash(),
                         cfg.master_seed)
    if report.degenerate:
        click.echo("gate failure: limiting variance is degenerate", err=True)
        return 3
    ok = report.ks[-1].passed and report.third_moment_bound_check
    ks_top = report.ks[-1]
    click.echo(f"clt: R={R} sigma*^2={report.covariance.sigma_star2:.6g} "
               f"KS(N={int(report.rungs[-1])})={ks_top.statistic:.4f} "
               f"thr={ks_top.threshold:.4f} {'OK' if ok else 'FAIL'} -> {out}")
    return 0 if ok else 3


@main.command()
@common_options
@guarded
def covariance(config_path, preset, out_dir, seed, threads, full_scale, render_plots):
    """Across-replica lag covariances with the mode-sum overlay."""
    cfg, out = resolve(config_path, preset, seed, out_dir)
    G = cfg.observable_fn()
    if cfg.observable != "I_cos":
        raise UsageError("lag covariances need the real observable I_cos")
    R = cfg.effective_R(full_scale)
    X = replica_matrix(cfg.density(), cfg.frequency_model(), cfg.noise(), G,
                       R, cfg.N, cfg.seed_plan(), threads=_threads(threads))
    rep = estimate_lag_covariances(X, H=cfg.H)

    table = _build_table(cfg)
    noise = cfg.noise()
    try:
        oracle_lags = [oracle_avg_lag_covariance(table, cfg.N, h, noise).real
                       for h in range(1, cfg.H + 1)]
    except UnsupportedError:
        oracle_lags = None

    try:
        fit = fit_decay(np.abs(rep.lags), x=np.arange(1, cfg.H + 1),
                        kind="exponential", weights="amplitude")
    except UsageError:
        fit = None

    rows = []
    for i in range(cfg.H):
        o = oracle_lags[i] if oracle_lags is not None else float("nan")
        se = rep.lag_stderr[i] if rep.lag_stderr is not None else float("nan")
        rows.append((i + 1, rep.lags[i], rep.lags_half[i], se, o))
    write_csv(out / "covariance_lags.csv",
              ["h", "lag_cov", "lag_cov_half", "stderr", "oracle"], rows, cfg)

    write_json(out / "covariance_report.json", {
        "command": "covariance",
        "config": cfg.to_dict(),
        **rep.to_jsonable(),
        "fit": None if fit is None else {
            "rate": fit.rate, "prefactor": fit.prefactor,
            "r_squared": fit.r_squared, "weights": "amplitude"},
        "oracle_lags": oracle_lags,
    }, cfg)
    if render_plots:
        from . import plots
        plots.covariance_figure(out / "covariance_lags.png", rep.lags,
                                cfg.config_hash(), cfg.master_seed,
                                stderr=rep.lag_stderr, oracle=oracle_lags,
                                fit=fit)
    rate_txt = "n/a" if fit is None else f"{fit.rate:.4f}"
    click.echo(f"covariance: R={R} sigma*^2={rep.sigma_star2:.6g} "
               f"fit rate={rate_txt} -> {out}")
    return 0


@main.command()
@common_options
@guarded
def counterexample(config_path, preset, out_dir, seed, threads, full_scale,
                   render_plots):
    """Resonant perturbation: frozen mode average plus an independent control."""
    cfg, out = resolve(config_path, preset, seed, out_dir)
    if cfg.noise_kind != "resonant":
        raise UsageError("counterexample needs a resonant noise config")
    table = _build_table(cfg)
    noise = cfg.noise()
    control = BrownianNoise(c=cfg.c)
    limit = limit_value(table)
    mode = -cfg.k

    ladder = [n for n in (1, 10, 100, 1000, 10000, 100000) if n <= cfg.N]
    if ladder[-1] != cfg.N:
        ladder.append(cfg.N)
    lad = np.asarray(ladder, dtype=int)
    ces_res = cesaro_ladder(table, lad, noise=noise)
    ces_mode = cesaro_ladder(table, lad, noise=noise, modes=[mode])
    ces_ctrl = cesaro_ladder(table, lad, noise=control)

    gap_res = np.abs(ces_res - limit)
    gap_ctrl = np.abs(ces_ctrl - limit)
    mode_scale = max(1.0, float(np.abs(ces_mode[0])))
    constancy = float(np.max(np.abs(ces_mode - ces_mode[0])))
    mode_frozen = constancy <= 1e-12 * mode_scale
    res_stuck = bool(gap_res[-1] > 100.0 * gap_ctrl[-1])
    ctrl_converged = bool(gap_ctrl[-1] < 0.1 * gap_ctrl[0])
    passed = mode_frozen and res_stuck and ctrl_converged

    write_csv(out / "counterexample_cesaro.csv",
              ["N", "res_re", "res_im", "res_gap", "ctrl_gap", "mode_re", "mode_im"],
              [(int(n), r.real, r.imag, gr, gc, m.real, m.imag)
               for n, r, gr, gc, m in zip(lad, ces_res, gap_res, gap_ctrl, ces_mode)],
              cfg)
    write_json(out / "counterexample_report.json", {
        "command": "counterexample",
        "config": cfg.to_dict(),
        "limit": [limit.real, limit.imag],
        "ladder": [int(n) for n in lad],
        "mode": {"k": mode, "cesaro_re": [v.real for v in ces_mode],
                 "cesaro_im": [v.imag for v in ces_mode],
                 "constancy_dev": constancy,
                 "tolerance": 1e-12 * mode_scale, "frozen": mode_frozen},
        "resonant_gap": [float(v) for v in gap_res],
        "control_gap": [float(v) for v in gap_ctrl],
        "resonant_non_convergent": res_stuck,
        "control_converged": ctrl_converged,
        "passed": passed,
    }, cfg)
    if render_plots:
        from . import plots
        plots.counterexample_figure(out / "counterexample_cesaro.png", lad,
                                    gap_res, gap_ctrl, cfg.config_hash(),
                                    cfg.master_seed)
    click.echo(f"counterexample: mode {mode} constancy {constancy:.3e}, "
               f"control gap {gap_ctrl[-1]:.3e} "
               f"{'OK' if passed else 'FAIL'} -> {out}")
    return 0 if passed else 3


@main.command("check-nonresonance")
@common_options
@click.option("--tolerance", type=float, default=1e-8, show_default=True,
              help="Resonance margin below which a grid point fails.")
@click.option("--grid-points", type=click.IntRange(2), default=1025,
              show_default=True, help="Action grid resolution.")
@guarded
def check_nonresonance_cmd(config_path, preset, out_dir, seed, threads,
                           full_scale, render_plots, tolerance, grid_points):
    """Scan k*omega(I) for near-multiples of 2*pi up to k_max."""
    cfg, out = resolve(config_path, preset, seed, out_dir)
    grid = np.linspace(cfg.I_min, cfg.I_max, grid_points)
    report = check_nonresonance(cfg.frequency_model(), grid, cfg.k_max,
                                tolerance=tolerance)
    min_margin = report.margins.min(axis=1)
    write_csv(out / "nonresonance_margins.csv", ["I", "min_margin"],
              [(float(i), float(m)) for i, m in zip(grid, min_margin)], cfg)
    write_json(out / "nonresonance_report.json", {
        "command": "check-nonresonance",
        "config": cfg.to_dict(),
        "k_max": report.k_max,
        "tolerance": report.tolerance,
        "worst_margin": report.worst_margin,
        "n_resonant": len(report.resonant_points),
        "resonant_points": [
            {"I": I, "k": k, "nearest_multiple": m}
            for I, k, m in report.resonant_points[:50]
        ],
        "passed": report.passed,
    }, cfg)
    if render_plots:
        from . import plots
        plots.nonresonance_figure(out / "nonresonance_margins.png", grid,
                                  min_margin, cfg.config_hash(), cfg.master_seed)
    click.echo(f"check-nonresonance: worst margin {report.worst_margin:.3e} "
               f"{'OK' if report.passed else 'FAIL'} -> {out}")
    return 0 if report.passed else 3


if __name__ == "__main__":
    main()
