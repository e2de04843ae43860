"""Iteration maps and angle perturbations.

The deterministic map is F^j: (I, theta) -> (I, theta + j*omega(I)).  Stochastic
variants add c*X_j to the angle, where X_j comes from one of the perturbation
models below.  Each model knows how to sample full paths, how to jump directly
to a sparse set of snapshot times (exact Markov skip-ahead where the law allows
it), and -- where a closed form exists -- its characteristic sequence
a_j(k) = E[e^{i c k X_j}], the quantity the spectral oracle consumes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError, UnsupportedError, UsageError
from .phase import ActionAngleState, FrequencyModel, rotation_angle, wrap_angle


# --------------------------------------------------------------------------- #
# perturbation models
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class NoNoise:
    """Deterministic rotation; X_j = 0."""

    c: float = 0.0
    kind = "none"


@dataclass(frozen=True)
class BrownianNoise:
    """X_j = B_j: standard Brownian motion at integer times (iid unit-normal increments)."""

    c: float
    kind = "brownian"

    def __post_init__(self):
        if self.c <= 0.0:
            raise DomainError("noise intensity c must be positive")


@dataclass(frozen=True)
class IIDIncrementNoise:
    """Random walk X_j = xi_1 + ... + xi_j with iid increments.

    char_fn is the characteristic function of one increment, so
    a_j(k) = char_fn(c*k)^j decays geometrically whenever |char_fn(ck)| < 1.
    Brownian is the special case of unit-normal increments.
    """

    c: float
    char_fn: Callable[[float], complex]
    sampler: Callable[[np.random.Generator, tuple], np.ndarray] | None = None
    label: str = "iid"
    kind = "iid"

    def __post_init__(self):
        if self.c <= 0.0:
            raise DomainError("noise intensity c must be positive")


def iid_normal(c: float) -> IIDIncrementNoise:
    """Unit-normal iid increments; coincides in law with BrownianNoise."""
    return IIDIncrementNoise(
        c=c,
        char_fn=lambda t: math.exp(-0.5 * t * t),
        sampler=lambda rng, shape: rng.standard_normal(shape),
        label="iid_normal",
    )


def iid_uniform(c: float, half_width: float = 1.0) -> IIDIncrementNoise:
    """Uniform(-w, w) iid increments; char fn sin(wt)/(wt)."""
    w = float(half_width)

    def char(t: float) -> complex:
        x = w * t
        return 1.0 if x == 0.0 else math.sin(x) / x

    return IIDIncrementNoise(
        c=c,
        char_fn=char,
        sampler=lambda rng, shape: rng.uniform(-w, w, size=shape),
        label="iid_uniform",
    )


@dataclass(frozen=True)
class AR1Noise:
    """X_j = r*X_{j-1} + innovation, innovations N(0, innovation_scale^2).

    stationary_init draws X_0 from the stationary law N(0, s^2/(1-r^2));
    otherwise X_0 = 0.  Gaussian marginals give the closed-form
    characteristic sequence exp(-c^2 k^2 Var(X_j)/2) in both cases; the
    variance converges geometrically to the stationary value, so a_j tends
    to a positive constant rather than to zero.
    """

    c: float
    r: float
    innovation_scale: float
    stationary_init: bool = True
    kind = "ar1"

    def __post_init__(self):
        if not (0.0 < self.r < 1.0):
            raise DomainError("AR1 coefficient r must lie in (0, 1)")
        if self.innovation_scale <= 0.0:
            raise DomainError("innovation_scale must be positive")
        if self.c <= 0.0:
            raise DomainError("noise intensity c must be positive")

    def marginal_variance(self, j) -> np.ndarray:
        """Var(X_j) for integer j >= 0 under the configured initialization."""
        j_arr = np.asarray(j, dtype=float)
        s2 = self.innovation_scale ** 2
        stat = s2 / (1.0 - self.r ** 2)
        if self.stationary_init:
            return np.full_like(j_arr, stat)
        return stat * (1.0 - self.r ** (2.0 * j_arr))


@dataclass(frozen=True)
class ResonantCounterexample:
    """Deterministic X_j = -(j/c) * omega(reference_I).

    Tuned so e^{i j k omega(I_ref)} * a_j(k) == 1 for every mode k: at the
    reference action the perturbation exactly undoes the rotation, and the
    flagged mode's Cesaro average freezes instead of converging.
    """

    c: float
    k: int
    reference_I: float
    omega_ref: float
    kind = "resonant"

    def __post_init__(self):
        if self.k == 0:
            raise UsageError("resonant mode k must be nonzero")
        if self.c <= 0.0:
            raise DomainError("noise intensity c must be positive")


def resonant_counterexample(model: FrequencyModel, c: float, k: int,
                            reference_I: float) -> ResonantCounterexample:
    return ResonantCounterexample(c=float(c), k=int(k), reference_I=float(reference_I),
                                  omega_ref=float(model.omega(reference_I)))


@dataclass(frozen=True)
class CustomProcess:
    """User-supplied path sampler with an optional closed-form a_j(k)."""

    c: float
    path_sampler: Callable[[np.random.Generator, int], np.ndarray]  # (rng, N) -> X_1..X_N
    char_sequence: Callable[[int, int], complex] | None = None
    label: str = "custom"
    kind = "custom"


PerturbationModel = (
    NoNoise | BrownianNoise | IIDIncrementNoise | AR1Noise | ResonantCounterexample | CustomProcess
)


# --------------------------------------------------------------------------- #
# noise paths
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class NoisePath:
    """One realized perturbation path X_1..X_N (cumulative[j-1] = X_j)."""

    increments: np.ndarray
    cumulative: np.ndarray

    def __post_init__(self):
        inc = np.asarray(self.increments, dtype=float)
        cum = np.asarray(self.cumulative, dtype=float)
        if inc.shape != cum.shape or inc.ndim != 1:
            raise UsageError("increments and cumulative must be matching 1-d arrays")
        object.__setattr__(self, "increments", inc)
        object.__setattr__(self, "cumulative", cum)

    def __len__(self) -> int:
        return self.increments.size

    def value(self, j: int) -> float:
        """X_j, with X_0 = 0 by convention."""
        if j < 0 or j > len(self):
            raise UsageError(f"step {j} outside path of length {len(self)}")
        return 0.0 if j == 0 else float(self.cumulative[j - 1])


def sample_noise_path(model: PerturbationModel, N: int,
                      stream: np.random.Generator | None = None) -> NoisePath:
    """Draw one path X_1..X_N.  Deterministic models ignore the stream."""
    if N < 1:
        raise UsageError("path length must be >= 1")
    if isinstance(model, NoNoise):
        z = np.zeros(N)
        return NoisePath(increments=z, cumulative=z.copy())
    if isinstance(model, ResonantCounterexample):
        cumulative = -(np.arange(1, N + 1) / model.c) * model.omega_ref
        increments = np.diff(cumulative, prepend=0.0)
        return NoisePath(increments=increments, cumulative=cumulative)
    if stream is None:
        raise UsageError("stochastic models need a random stream")
    if isinstance(model, BrownianNoise):
        increments = stream.standard_normal(N)
    elif isinstance(model, IIDIncrementNoise):
        if model.sampler is None:
            raise UnsupportedError("this iid model has no increment sampler")
        increments = np.asarray(model.sampler(stream, (N,)), dtype=float)
    elif isinstance(model, AR1Noise):
        x0 = 0.0
        if model.stationary_init:
            x0 = model.innovation_scale / math.sqrt(1.0 - model.r ** 2) * stream.standard_normal()
        xs = np.empty(N)
        prev = x0
        innov = model.innovation_scale * stream.standard_normal(N)
        for i in range(N):
            prev = model.r * prev + innov[i]
            xs[i] = prev
        return NoisePath(increments=np.diff(xs, prepend=x0), cumulative=xs)
    elif isinstance(model, CustomProcess):
        xs = np.asarray(model.path_sampler(stream, N), dtype=float)
        if xs.shape != (N,):
            raise UsageError("custom path sampler must return shape (N,)")
        return NoisePath(increments=np.diff(xs, prepend=0.0), cumulative=xs)
    else:
        raise UnsupportedError(f"unknown perturbation model {model!r}")
    return NoisePath(increments=increments, cumulative=np.cumsum(increments))


# --------------------------------------------------------------------------- #
# batch path / snapshot sampling (engine support)
# --------------------------------------------------------------------------- #

def path_cumulative(model: PerturbationModel, N: int, n: int,
                    rng: np.random.Generator) -> np.ndarray:
    """(n, N) array of X_1..X_N for n independent paths."""
    if isinstance(model, NoNoise):
        return np.zeros((n, N))
    if isinstance(model, ResonantCounterexample):
        row = -(np.arange(1, N + 1) / model.c) * model.omega_ref
        return np.broadcast_to(row, (n, N)).copy()
    if isinstance(model, BrownianNoise):
        return np.cumsum(rng.standard_normal((n, N)), axis=1)
    if isinstance(model, IIDIncrementNoise):
        if model.sampler is None:
            raise UnsupportedError("this iid model has no increment sampler")
        return np.cumsum(np.asarray(model.sampler(rng, (n, N)), dtype=float), axis=1)
    if isinstance(model, AR1Noise):
        xs = np.empty((n, N))
        if model.stationary_init:
            prev = model.innovation_scale / math.sqrt(1.0 - model.r ** 2) * rng.standard_normal(n)
        else:
            prev = np.zeros(n)
        innov = model.innovation_scale * rng.standard_normal((n, N))
        for j in range(N):
            prev = model.r * prev + innov[:, j]
            xs[:, j] = prev
        return xs
    if isinstance(model, CustomProcess):
        return np.stack([np.asarray(model.path_sampler(rng, N), dtype=float) for _ in range(n)])
    raise UnsupportedError(f"unknown perturbation model {model!r}")


def snapshot_cumulative(model: PerturbationModel, j_list, n: int,
                        rng: np.random.Generator | None) -> np.ndarray:
    """(n, len(j_list)) array of X_j at sorted snapshot times, by exact skip-ahead.

    Brownian gaps are N(0, dj); AR1 jumps use the conditional law
    X_{j+d} | X_j ~ N(r^d X_j, s^2 (1 - r^(2d)) / (1 - r^2)).  Models without
    a skip-ahead law fall back to full paths.
    """
    j_arr = np.asarray(j_list, dtype=int)
    if j_arr.ndim != 1 or np.any(np.diff(j_arr) <= 0) or np.any(j_arr < 0):
        raise UsageError("snapshot times must be strictly increasing and nonnegative")
    if isinstance(model, NoNoise):
        return np.zeros((n, j_arr.size))
    if isinstance(model, ResonantCounterexample):
        row = np.where(j_arr > 0, -(j_arr / model.c) * model.omega_ref, 0.0)
        return np.broadcast_to(row, (n, j_arr.size)).copy()
    if rng is None:
        raise UsageError("stochastic models need a random stream")
    if isinstance(model, BrownianNoise) or (
        isinstance(model, IIDIncrementNoise) and model.label == "iid_normal"
    ):
        gaps = np.diff(j_arr, prepend=0)
        out = np.zeros((n, j_arr.size))
        acc = np.zeros(n)
        for col, gap in enumerate(gaps):
            if gap > 0:
                acc = acc + math.sqrt(float(gap)) * rng.standard_normal(n)
            out[:, col] = acc
        return out
    if isinstance(model, AR1Noise):
        s2 = model.innovation_scale ** 2
        stat = s2 / (1.0 - model.r ** 2)
        out = np.zeros((n, j_arr.size))
        if model.stationary_init:
            x = math.sqrt(stat) * rng.standard_normal(n)
        else:
            x = np.zeros(n)
        prev_j = 0
        for col, j in enumerate(j_arr):
            gap = j - prev_j
            if gap > 0:
                decay = model.r ** gap
                cond_sd = math.sqrt(stat * (1.0 - decay * decay))
                x = decay * x + cond_sd * rng.standard_normal(n)
            out[:, col] = x
            prev_j = j
        return out
    # generic fallback: realize full paths up to the last snapshot
    full = path_cumulative(model, int(j_arr.max()), n, rng)
    out = np.zeros((n, j_arr.size))
    pos = j_arr > 0
    out[:, pos] = full[:, j_arr[pos] - 1]
    return out


# --------------------------------------------------------------------------- #
# iteration
# --------------------------------------------------------------------------- #

def iterate_deterministic(state: ActionAngleState, model: FrequencyModel,
                          j: int) -> ActionAngleState:
    """F^j in closed form: actions invariant, angles advance by j*omega(I)."""
    if j < 0:
        raise DomainError("iteration count must be nonnegative")
    omega = np.asarray(model.omega(state.action), dtype=float)
    return ActionAngleState(action=state.action.copy(),
                            angle=rotation_angle(state.angle, omega, j))


def iterate_stochastic(state: ActionAngleState, model: FrequencyModel,
                       noise: NoisePath, c: float, j: int) -> ActionAngleState:
    """S^j: theta_j = theta_0 + j*omega(I) + c*X_j, actions invariant."""
    if j < 0:
        raise DomainError("iteration count must be nonnegative")
    if j > len(noise):
        raise UsageError(f"noise path too short for step {j}")
    omega = np.asarray(model.omega(state.action), dtype=float)
    base = rotation_angle(state.angle, omega, j)
    return ActionAngleState(action=state.action.copy(),
                            angle=wrap_angle(base + c * noise.value(j)))


# --------------------------------------------------------------------------- #
# characteristic sequences
# --------------------------------------------------------------------------- #

def characteristic_sequence(model: PerturbationModel, c: float | None, k: int, j: int,
                            *, stream: np.random.Generator | None = None,
                            mc_paths: int | None = 10000) -> complex:
    """a_j(k) = E[e^{i c k X_j}].

    Closed forms: Brownian exp(-c^2 k^2 j / 2); iid random walk char_fn(ck)^j;
    AR1 exp(-c^2 k^2 Var(X_j)/2); resonant e^{-i j k omega_ref}.  Custom models
    use their supplied closed form, else a Monte Carlo estimate over mc_paths
    paths from the given stream (mc_paths=None disables the fallback).
    """
    if j < 0:
        raise DomainError("j must be nonnegative")
    if c is None:
        c = model.c
    if j == 0 or k == 0:
        return 1.0 + 0.0j
    if isinstance(model, NoNoise):
        return 1.0 + 0.0j
    if isinstance(model, BrownianNoise):
        return complex(math.exp(-0.5 * (c * k) ** 2 * j))
    if isinstance(model, IIDIncrementNoise):
        return complex(model.char_fn(c * k)) ** j
    if isinstance(model, AR1Noise):
        return complex(math.exp(-0.5 * (c * k) ** 2 * float(model.marginal_variance(j))))
    if isinstance(model, ResonantCounterexample):
        return complex(np.exp(-1j * (j * k * model.omega_ref)))
    if isinstance(model, CustomProcess):
        if model.char_sequence is not None:
            return complex(model.char_sequence(k, j))
        if mc_paths is None:
            raise UnsupportedError("no closed form and Monte Carlo estimation disabled")
        if stream is None:
            raise UsageError("Monte Carlo characteristic estimate needs a stream")
        value, _ = characteristic_sequence_mc(model, c, k, j, stream, mc_paths)
        return value
    raise UnsupportedError(f"unknown perturbation model {model!r}")


def characteristic_sequence_mc(model: PerturbationModel, c: float, k: int, j: int,
                               stream: np.random.Generator,
                               n_paths: int = 10000) -> tuple[complex, float]:
    """Monte Carlo a_j(k) with its standard error (complex modulus of the se pair)."""
    if n_paths < 100:
        raise UsageError("need at least 100 paths for an estimate")
    xs = path_cumulative(model, j, n_paths, stream)[:, j - 1]
    z = np.exp(1j * c * k * xs)
    value = complex(z.mean())
    se = math.hypot(float(z.real.std(ddof=1)), float(z.imag.std(ddof=1))) / math.sqrt(n_paths)
    return value, se
