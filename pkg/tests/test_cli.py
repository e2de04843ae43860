"""End-to-end checks of the command line entry points.

Each test drives a real subcommand through click's test runner against a
small throwaway config written to tmp_path, so file formats, headers,
exit codes and thread invariance are all exercised at the CLI surface.
"""

import dataclasses
import json
import re

import numpy as np
import pytest
from click.testing import CliRunner

from twistens.cli import main
from twistens.config import (ExperimentConfig, config_from_dict, load_preset,
                             preset_names)

HEADER_RE = re.compile(r"# config_hash=[0-9a-f]{12} master_seed=\d+")


def toy(**over):
    base = dict(
        density_kind="gaussian", observable="sqrt2I_exp",
        noise_kind="brownian", c=0.1,
        M=1500, N=120, R=300, snapshots=(0, 1, 10, 50),
        k_max=8, I_nodes=200, theta_points=256, panels=1,
        H=10, rungs=(10, 50), master_seed=7)
    base.update(over)
    return ExperimentConfig(**base)


def write_cfg(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg.to_dict()))
    return str(path)


def run(args):
    return CliRunner().invoke(main, args)


def combined(result):
    out = result.output
    try:
        out += result.stderr
    except (ValueError, AttributeError):
        pass
    return out


def first_line(path):
    with open(path) as f:
        return f.readline().rstrip("\n")


def check_stamp(path, cfg):
    line = first_line(path)
    assert HEADER_RE.fullmatch(line), line
    assert line == f"# config_hash={cfg.config_hash()} master_seed={cfg.master_seed}"


def test_version_flag():
    result = run(["--version"])
    assert result.exit_code == 0
    assert "0.1.0" in result.output


def test_requires_exactly_one_config_source(tmp_path):
    cfg_path = write_cfg(tmp_path, toy())
    neither = run(["simulate", "--out", str(tmp_path / "o")])
    assert neither.exit_code == 2
    both = run(["simulate", "--config", cfg_path, "--preset",
                "deterministic_cloud", "--out", str(tmp_path / "o")])
    assert both.exit_code == 2
    assert "exactly one" in combined(both)


def test_missing_and_malformed_config_files(tmp_path):
    missing = run(["simulate", "--config", str(tmp_path / "nope.json"),
                   "--out", str(tmp_path / "o")])
    assert missing.exit_code == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    malformed = run(["simulate", "--config", str(bad),
                     "--out", str(tmp_path / "o")])
    assert malformed.exit_code == 2


def test_unknown_preset_rejected(tmp_path):
    result = run(["simulate", "--preset", "no_such_thing",
                  "--out", str(tmp_path / "o")])
    assert result.exit_code == 2


def test_presets_round_trip_through_dict():
    for name in preset_names():
        cfg = load_preset(name)
        assert config_from_dict(cfg.to_dict()) == cfg
        assert re.fullmatch(r"[0-9a-f]{12}", cfg.config_hash())


def test_simulate_outputs(tmp_path):
    cfg = toy()
    cfg_path = write_cfg(tmp_path, cfg)
    out = tmp_path / "run"
    result = run(["simulate", "--config", cfg_path, "--out", str(out),
                  "--threads", "2"])
    assert result.exit_code == 0, combined(result)

    for j in cfg.snapshots:
        path = out / f"phase_t{j}.csv"
        check_stamp(path, cfg)
        lines = path.read_text().splitlines()
        assert lines[1] == "q,p,I,theta"
        assert len(lines) == 2 + cfg.M

    means = out / "ensemble_means.csv"
    check_stamp(means, cfg)
    lines = means.read_text().splitlines()
    assert lines[1] == "j,re_mean,im_mean,stderr_re,stderr_im,centroid_norm"
    assert len(lines) == 2 + len(cfg.snapshots)

    summary = json.loads((out / "run_summary.json").read_text())
    assert summary["config_hash"] == cfg.config_hash()
    assert summary["master_seed"] == cfg.master_seed
    assert summary["command"] == "simulate"
    assert summary["count"] == cfg.M
    assert summary["snapshots"] == list(cfg.snapshots)
    assert set(summary["energy"]) == {"mean_by_snapshot", "range", "max_drift"}
    assert (out / "phase_clouds.png").exists()
    assert (out / "centroid_decay.png").exists()


def test_simulate_energy_level_and_seed_override(tmp_path):
    cfg = toy(energy_level=0.181)
    cfg_path = write_cfg(tmp_path, cfg)
    out = tmp_path / "run"
    result = run(["simulate", "--config", cfg_path, "--out", str(out),
                  "--seed", "11", "--no-plots"])
    assert result.exit_code == 0, combined(result)
    summary = json.loads((out / "run_summary.json").read_text())
    # seed override must flow into the recorded config and its hash
    assert summary["master_seed"] == 11
    assert summary["config"]["master_seed"] == 11
    assert summary["config_hash"] != cfg.config_hash()
    assert summary["config_hash"] == dataclasses.replace(
        cfg, master_seed=11).config_hash()
    energy = summary["energy"]
    assert energy["level"] == 0.181
    assert isinstance(energy["level_in_range"], bool)
    assert not (out / "phase_clouds.png").exists()


def test_full_scale_flag_switches_ensemble_size(tmp_path):
    cfg = toy(M=400, snapshots=(0, 5), full_scale_M=900)
    cfg_path = write_cfg(tmp_path, cfg)
    out = tmp_path / "run"
    result = run(["simulate", "--config", cfg_path, "--out", str(out),
                  "--full-scale", "--no-plots"])
    assert result.exit_code == 0, combined(result)
    lines = (out / "phase_t0.csv").read_text().splitlines()
    assert len(lines) == 2 + 900


def test_oracle_outputs(tmp_path):
    cfg = toy()
    cfg_path = write_cfg(tmp_path, cfg)
    out = tmp_path / "run"
    result = run(["oracle", "--config", cfg_path, "--out", str(out)])
    assert result.exit_code == 0, combined(result)
    check_stamp(out / "oracle_means.csv", cfg)
    cesaro = (out / "oracle_cesaro.csv").read_text().splitlines()
    assert cesaro[1] == "N,re,im,abs"
    assert len(cesaro) == 2 + cfg.N
    summary = json.loads((out / "oracle_summary.json").read_text())
    assert summary["tail_fraction"] <= summary["tail_gate"]
    assert (out / "oracle_decay.png").exists()


def test_compare_within_gate(tmp_path):
    cfg = toy()
    cfg_path = write_cfg(tmp_path, cfg)
    out = tmp_path / "run"
    result = run(["compare", "--config", cfg_path, "--out", str(out),
                  "--no-plots"])
    assert result.exit_code == 0, combined(result)
    report = json.loads((out / "compare_report.json").read_text())
    assert report["passed"] is True
    assert report["max_abs_z"] <= report["gate"] == 5.0
    assert len(report["rows"]) == len(cfg.snapshots)
    row = report["rows"][0]
    assert {"j", "mc_re", "oracle_re", "z_re", "z_im"} <= set(row)


def test_clt_needs_real_observable(tmp_path):
    cfg_path = write_cfg(tmp_path, toy())
    result = run(["clt", "--config", cfg_path, "--out", str(tmp_path / "o")])
    assert result.exit_code == 2
    assert "I_cos" in combined(result)


def test_clt_degenerate_variance_gates_at_3(tmp_path):
    # a near-point cloud with no noise gives partial sums with no spread
    cfg = toy(observable="I_cos", noise_kind="none", eps0=1e-12,
              N=60, R=200, rungs=(20, 60), H=10)
    cfg_path = write_cfg(tmp_path, cfg)
    out = tmp_path / "run"
    result = run(["clt", "--config", cfg_path, "--out", str(out),
                  "--no-plots"])
    assert result.exit_code == 3, combined(result)
    report = json.loads((out / "clt_report.json").read_text())
    assert report["degenerate"] is True
    assert report["ecdf"] is None


def test_clt_outputs_on_noisy_run(tmp_path):
    cfg = toy(observable="I_cos", noise_kind="brownian", c=0.5,
              N=120, R=600, rungs=(30, 120), H=12)
    cfg_path = write_cfg(tmp_path, cfg)
    out = tmp_path / "run"
    result = run(["clt", "--config", cfg_path, "--out", str(out),
                  "--no-plots"])
    assert result.exit_code in (0, 3), combined(result)
    report = json.loads((out / "clt_report.json").read_text())
    assert report["degenerate"] is False
    assert report["ecdf"]["rung"] == 120
    for n in (30, 120):
        path = out / f"clt_samples_N{n}.csv"
        check_stamp(path, cfg)
        assert len(path.read_text().splitlines()) == 2 + cfg.R


def test_covariance_outputs(tmp_path):
    cfg = toy(observable="I_cos", noise_kind="brownian", c=0.2,
              N=120, R=300, H=10)
    cfg_path = write_cfg(tmp_path, cfg)
    out = tmp_path / "run"
    result = run(["covariance", "--config", cfg_path, "--out", str(out),
                  "--no-plots"])
    assert result.exit_code == 0, combined(result)
    lags = (out / "covariance_lags.csv").read_text().splitlines()
    assert lags[1] == "h,lag_cov,lag_cov_half,stderr,oracle"
    assert len(lags) == 2 + cfg.H
    report = json.loads((out / "covariance_report.json").read_text())
    assert report["H"] == cfg.H
    assert "sigma_star2" in report
    assert len(report["oracle_lags"]) == cfg.H


def test_counterexample_toy_run(tmp_path):
    cfg = toy(noise_kind="resonant", c=0.1, k=1, reference_I=0.5,
              M=1500, N=600)
    cfg_path = write_cfg(tmp_path, cfg)
    out = tmp_path / "run"
    result = run(["counterexample", "--config", cfg_path, "--out", str(out),
                  "--no-plots"])
    assert result.exit_code == 0, combined(result)
    report = json.loads((out / "counterexample_report.json").read_text())
    assert report["mode"]["frozen"] is True
    assert report["resonant_non_convergent"] is True
    assert report["control_converged"] is True
    assert report["passed"] is True
    check_stamp(out / "counterexample_cesaro.csv", cfg)


def test_counterexample_requires_resonant_noise(tmp_path):
    cfg_path = write_cfg(tmp_path, toy())
    result = run(["counterexample", "--config", cfg_path,
                  "--out", str(tmp_path / "o")])
    assert result.exit_code == 2


def test_check_nonresonance_pass_and_forced_fail(tmp_path):
    cfg = toy()
    cfg_path = write_cfg(tmp_path, cfg)
    ok = run(["check-nonresonance", "--config", cfg_path,
              "--out", str(tmp_path / "a"), "--no-plots"])
    assert ok.exit_code == 0, combined(ok)
    report = json.loads((tmp_path / "a" / "nonresonance_report.json").read_text())
    assert report["passed"] is True
    assert report["n_resonant"] == 0

    # an absurd tolerance marks most of the grid resonant
    forced = run(["check-nonresonance", "--config", cfg_path,
                  "--out", str(tmp_path / "b"), "--no-plots",
                  "--tolerance", "0.5"])
    assert forced.exit_code == 3
    report = json.loads((tmp_path / "b" / "nonresonance_report.json").read_text())
    assert report["passed"] is False
    assert report["n_resonant"] > 0
    assert len(report["resonant_points"]) <= 50


def test_unwritable_out_dir_exits_4(tmp_path):
    cfg_path = write_cfg(tmp_path, toy())
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    result = run(["check-nonresonance", "--config", cfg_path,
                  "--out", str(blocker / "sub")])
    assert result.exit_code == 4


def read_tree(out):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


def test_outputs_independent_of_thread_count(tmp_path):
    cfg = toy()
    cfg_path = write_cfg(tmp_path, cfg)
    trees = []
    for tag, threads in (("t1", "1"), ("t4", "4")):
        out = tmp_path / f"sim_{tag}"
        result = run(["simulate", "--config", cfg_path, "--out", str(out),
                      "--threads", threads])
        assert result.exit_code == 0, combined(result)
        trees.append(read_tree(out))
    assert trees[0].keys() == trees[1].keys()
    for name in trees[0]:
        assert trees[0][name] == trees[1][name], f"{name} differs with threads"

    cov = toy(observable="I_cos", noise_kind="brownian", c=0.2,
              N=120, R=300, H=10)
    cov_path = write_cfg(tmp_path, cov, name="cov.json")
    trees = []
    for tag, threads in (("t1", "1"), ("t3", "3")):
        out = tmp_path / f"cov_{tag}"
        result = run(["covariance", "--config", cov_path, "--out", str(out),
                      "--threads", threads, "--no-plots"])
        assert result.exit_code == 0, combined(result)
        trees.append(read_tree(out))
    for name in trees[0]:
        assert trees[0][name] == trees[1][name], f"{name} differs with threads"
