"""Experiment configuration: parsing, validation, canonical hashing, presets.

Configs are JSON with a schema_version field.  Parsing normalizes every value
into the frozen ExperimentConfig below, and the canonical re-serialization of
that object (sorted keys, fixed separators) is what gets hashed, so two
configs that parse the same hash the same.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .dynamics import (AR1Noise, BrownianNoise, NoNoise, iid_normal,
                       resonant_counterexample)
from .errors import UsageError
from .phase import FrequencyModel, Observable, action_cosine, complex_position
from .sampling import GaussianPhaseSpace, SeedPlan, UniformBandCosine

SCHEMA_VERSION = 1

OBSERVABLES = {
    "sqrt2I_exp": complex_position,
    "I_cos": action_cosine,
}

_DEFAULT_SNAPSHOTS = (0, 1, 10, 100, 1000, 10000)


@dataclass(frozen=True)
class ExperimentConfig:
    alpha: float = 0.3
    beta: float = 0.1
    gamma: float = 0.005
    density_kind: str = "gaussian"
    q0: float = 1.0
    p0: float = 0.0
    eps0: float = 0.01
    I_lo: float = 0.2                  # uniform band only
    I_hi: float = 1.8
    coupling: float = 0.8
    observable: str = "sqrt2I_exp"
    noise_kind: str = "none"
    c: float = 0.0
    r: float = 0.5                     # ar1 only
    innovation_scale: float = 1.0
    stationary_init: bool = True
    k: int = 1                         # resonant only
    reference_I: float = 0.5
    M: int = 100000
    N: int = 1000
    R: int = 10000
    snapshots: tuple[int, ...] = _DEFAULT_SNAPSHOTS
    k_max: int = 16
    I_nodes: int = 400
    I_max: float = 2.0
    I_min: float = 0.0
    theta_points: int = 512
    panels: int = 1
    H: int = 20
    rungs: tuple[int, ...] = (10, 100, 1000)
    ks_threshold: float | None = None
    energy_level: float | None = None
    master_seed: int = 101
    out_dir: str = "twistens_out"
    full_scale_M: int | None = None
    full_scale_R: int | None = None

    def __post_init__(self):
        if self.density_kind not in ("gaussian", "uniform_band_cosine"):
            raise UsageError(f"unknown density kind {self.density_kind!r}")
        if self.observable not in OBSERVABLES:
            raise UsageError(f"unknown observable {self.observable!r}; "
                             f"choose from {sorted(OBSERVABLES)}")
        if self.noise_kind not in ("none", "brownian", "iid_normal", "ar1", "resonant"):
            raise UsageError(f"unknown noise kind {self.noise_kind!r}")
        if self.noise_kind != "none" and self.c <= 0:
            raise UsageError("noise intensity c must be positive")
        for name in ("M", "N", "R", "k_max", "I_nodes", "theta_points", "panels", "H"):
            if getattr(self, name) < 1:
                raise UsageError(f"{name} must be >= 1")
        if self.eps0 <= 0:
            raise UsageError("eps0 must be positive")
        if not self.I_min < self.I_max:
            raise UsageError("need I_min < I_max")
        if self.density_kind == "uniform_band_cosine" and not (0 <= self.I_lo < self.I_hi):
            raise UsageError("need 0 <= I_lo < I_hi for the band density")
        if any(j < 0 for j in self.snapshots) or len(self.snapshots) == 0:
            raise UsageError("snapshot list must be nonempty and nonnegative")
        if any(n < 1 for n in self.rungs) or list(self.rungs) != sorted(set(self.rungs)):
            raise UsageError("rungs must be strictly increasing positive integers")
        if not (0 <= self.master_seed < 2 ** 64):
            raise UsageError("master_seed must fit in 64 bits")

    # ---- builders ----

    def frequency_model(self) -> FrequencyModel:
        return FrequencyModel.cubic(self.alpha, self.beta, self.gamma)

    def density(self):
        if self.density_kind == "gaussian":
            return GaussianPhaseSpace(q0=self.q0, p0=self.p0, eps0=self.eps0)
        return UniformBandCosine(I_lo=self.I_lo, I_hi=self.I_hi, coupling=self.coupling)

    def observable_fn(self) -> Observable:
        return OBSERVABLES[self.observable](I_max=self.I_max)

    def noise(self):
        if self.noise_kind == "none":
            return None
        if self.noise_kind == "brownian":
            return BrownianNoise(c=self.c)
        if self.noise_kind == "iid_normal":
            return iid_normal(self.c)
        if self.noise_kind == "ar1":
            return AR1Noise(c=self.c, r=self.r, innovation_scale=self.innovation_scale,
                            stationary_init=self.stationary_init)
        return resonant_counterexample(self.frequency_model(), c=self.c, k=self.k,
                                       reference_I=self.reference_I)

    def seed_plan(self) -> SeedPlan:
        return SeedPlan(master_seed=self.master_seed)

    def effective_M(self, full_scale: bool) -> int:
        if full_scale and self.full_scale_M is not None:
            return self.full_scale_M
        return self.M

    def effective_R(self, full_scale: bool) -> int:
        if full_scale and self.full_scale_R is not None:
            return self.full_scale_R
        return self.R

    # ---- serialization ----

    def to_dict(self) -> dict:
        d = {
            "schema_version": SCHEMA_VERSION,
            "hamiltonian": {"alpha": self.alpha, "beta": self.beta, "gamma": self.gamma},
            "observable": self.observable,
            "ensemble": {"M": self.M, "N": self.N, "R": self.R,
                         "snapshots": list(self.snapshots)},
            "oracle": {"k_max": self.k_max, "I_nodes": self.I_nodes,
                       "I_max": self.I_max, "I_min": self.I_min,
                       "theta_points": self.theta_points, "panels": self.panels},
            "stats": {"H": self.H, "rungs": list(self.rungs)},
            "master_seed": self.master_seed,
            "out_dir": self.out_dir,
        }
        if self.density_kind == "gaussian":
            d["density"] = {"kind": "gaussian", "q0": self.q0, "p0": self.p0,
                            "eps0": self.eps0}
        else:
            d["density"] = {"kind": "uniform_band_cosine", "I_lo": self.I_lo,
                            "I_hi": self.I_hi, "coupling": self.coupling}
        noise: dict = {"kind": self.noise_kind}
        if self.noise_kind != "none":
            noise["c"] = self.c
        if self.noise_kind == "ar1":
            noise.update(r=self.r, innovation_scale=self.innovation_scale,
                         stationary_init=self.stationary_init)
        if self.noise_kind == "resonant":
            noise.update(k=self.k, reference_I=self.reference_I)
        d["noise"] = noise
        if self.ks_threshold is not None:
            d["stats"]["ks_threshold"] = self.ks_threshold
        if self.energy_level is not None:
            d["energy_level"] = self.energy_level
        if self.full_scale_M is not None or self.full_scale_R is not None:
            fs = {}
            if self.full_scale_M is not None:
                fs["M"] = self.full_scale_M
            if self.full_scale_R is not None:
                fs["R"] = self.full_scale_R
            d["full_scale"] = fs
        return d

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:12]


def _require_keys(d: dict, allowed: set[str], where: str):
    extra = set(d) - allowed
    if extra:
        raise UsageError(f"unknown keys in {where}: {sorted(extra)}")


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise UsageError("config root must be a JSON object")
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise UsageError(f"unsupported schema_version {version!r}; expected {SCHEMA_VERSION}")
    _require_keys(raw, {"schema_version", "hamiltonian", "density", "observable",
                        "noise", "ensemble", "oracle", "stats", "master_seed",
                        "out_dir", "energy_level", "full_scale"}, "config")
    kw: dict = {}
    ham = raw.get("hamiltonian", {})
    _require_keys(ham, {"alpha", "beta", "gamma"}, "hamiltonian")
    kw.update({k: float(ham[k]) for k in ("alpha", "beta", "gamma") if k in ham})

    dens = raw.get("density", {"kind": "gaussian"})
    kind = dens.get("kind", "gaussian")
    kw["density_kind"] = kind
    if kind == "gaussian":
        _require_keys(dens, {"kind", "q0", "p0", "eps0"}, "density")
        for key in ("q0", "p0", "eps0"):
            if key in dens:
                kw[key] = float(dens[key])
    else:
        _require_keys(dens, {"kind", "I_lo", "I_hi", "coupling"}, "density")
        for key in ("I_lo", "I_hi", "coupling"):
            if key in dens:
                kw[key] = float(dens[key])

    if "observable" in raw:
        kw["observable"] = str(raw["observable"])

    noise = raw.get("noise", {"kind": "none"})
    _require_keys(noise, {"kind", "c", "r", "innovation_scale", "stationary_init",
                          "k", "reference_I"}, "noise")
    kw["noise_kind"] = noise.get("kind", "none")
    for key, cast in (("c", float), ("r", float), ("innovation_scale", float),
                      ("stationary_init", bool), ("k", int), ("reference_I", float)):
        if key in noise:
            kw[key] = cast(noise[key])

    ens = raw.get("ensemble", {})
    _require_keys(ens, {"M", "N", "R", "snapshots"}, "ensemble")
    for key in ("M", "N", "R"):
        if key in ens:
            kw[key] = int(ens[key])
    if "snapshots" in ens:
        kw["snapshots"] = tuple(int(j) for j in ens["snapshots"])

    orc = raw.get("oracle", {})
    _require_keys(orc, {"k_max", "I_nodes", "I_max", "I_min", "theta_points", "panels"},
                  "oracle")
    for key, cast in (("k_max", int), ("I_nodes", int), ("I_max", float),
                      ("I_min", float), ("theta_points", int), ("panels", int)):
        if key in orc:
            kw[key] = cast(orc[key])

    st = raw.get("stats", {})
    _require_keys(st, {"H", "rungs", "ks_threshold"}, "stats")
    if "H" in st:
        kw["H"] = int(st["H"])
    if "rungs" in st:
        kw["rungs"] = tuple(int(n) for n in st["rungs"])
    if "ks_threshold" in st:
        kw["ks_threshold"] = float(st["ks_threshold"])

    if "master_seed" in raw:
        kw["master_seed"] = int(raw["master_seed"])
    if "out_dir" in raw:
        kw["out_dir"] = str(raw["out_dir"])
    if "energy_level" in raw and raw["energy_level"] is not None:
        kw["energy_level"] = float(raw["energy_level"])
    fs = raw.get("full_scale", {})
    _require_keys(fs, {"M", "R"}, "full_scale")
    if "M" in fs:
        kw["full_scale_M"] = int(fs["M"])
    if "R" in fs:
        kw["full_scale_R"] = int(fs["R"])
    return ExperimentConfig(**kw)


def load_config(path: str | Path) -> ExperimentConfig:
    p = Path(path)
    try:
        raw = json.loads(p.read_text())
    except FileNotFoundError:
        raise
    except json.JSONDecodeError as e:
        raise UsageError(f"config {p} is not valid JSON: {e}") from e
    return config_from_dict(raw)


def preset_names() -> list[str]:
    root = resources.files("twistens").joinpath("presets")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_preset(name: str) -> ExperimentConfig:
    ref = resources.files("twistens").joinpath("presets").joinpath(f"{name}.json")
    if not ref.is_file():
        raise UsageError(f"no preset named {name!r}; available: {preset_names()}")
    return config_from_dict(json.loads(ref.read_text()))
