"""Semi-analytic Fourier-mode oracle for ensemble expectations.

Expectations of an observable under the iterated map reduce, via the angular
Fourier expansions of G and of the initial density, to one-dimensional action
integrals

    <G>_j = 2*pi * int sum_k G_hat_k(I) rho_hat_{-k}(I) e^{i k omega(I) j} a_j(k) dI,

with a_j(k) the characteristic sequence of the angle perturbation (1 for the
deterministic map).  The table below freezes the Gauss-Legendre action nodes,
the mode coefficients, and the frequency values; everything else is closed-form
reductions on top of it.  This path shares no sampling code with the Monte
Carlo engines, which is what makes the cross-validation meaningful.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .dynamics import (AR1Noise, BrownianNoise, CustomProcess, IIDIncrementNoise,
                       NoNoise, PerturbationModel, ResonantCounterexample)
from .errors import UnsupportedError, UsageError
from .phase import TWO_PI, FrequencyModel, Observable
from .sampling import InitialDensity, density_value

_PRUNE_REL = 1e-15


@dataclass(frozen=True)
class SpectralTable:
    """Frozen quadrature + mode data for one (G, rho, h) triple.

    rho_hat spans twice the observable mode range because covariance
    reductions index the density at -(m+n).
    """

    nodes: np.ndarray            # Gauss-Legendre actions, shape (n,)
    weights: np.ndarray          # matching weights, shape (n,)
    omega: np.ndarray            # omega(I) at the nodes
    k_values: np.ndarray         # observable modes, -k_max..k_max
    G_hat: np.ndarray            # (2*k_max+1, n)
    rho_k_values: np.ndarray     # density modes, -2*k_max..2*k_max
    rho_hat: np.ndarray          # (4*k_max+1, n)
    I_range: tuple[float, float]
    theta_points: int
    tail_fraction: float

    def g_row(self, k: int) -> np.ndarray:
        k_max = int(self.k_values[-1])
        if abs(k) > k_max:
            raise UsageError(f"mode {k} outside table range {k_max}")
        return self.G_hat[k + k_max]

    def rho_row(self, k: int) -> np.ndarray:
        r_max = int(self.rho_k_values[-1])
        if abs(k) > r_max:
            raise UsageError(f"density mode {k} outside table range {r_max}")
        return self.rho_hat[k + r_max]

    def mode_weight(self, k: int) -> np.ndarray:
        """Integrand weight w(I) G_hat_k(I) rho_hat_{-k}(I) at the nodes."""
        return self.weights * self.g_row(k) * self.rho_row(-k)


def build_spectral_table(G: Observable, rho: InitialDensity, model: FrequencyModel,
                         k_max: int = 16, n_nodes: int = 400, I_max: float = 2.0,
                         I_min: float = 0.0, theta_points: int = 512,
                         panels: int = 1) -> SpectralTable:
    """Tabulate modes and frequencies on (I_min, I_max].

    Mode coefficients come from the FFT of G and rho on a uniform angle grid
    (exact for band-limited integrands, spectrally accurate otherwise).  A
    truncation-tail estimate compares the outermost retained mode against the
    strongest one; a tail above 1e-3 of the head triggers a warning.

    panels > 1 switches to composite Gauss-Legendre (n_nodes split across
    equal subintervals), which builds large oscillation-resolving grids in
    O(n) instead of the single-rule O(n^2) node solve.
    """
    if k_max < 1:
        raise UsageError("k_max must be >= 1")
    Q = int(theta_points)
    if Q < 8 * k_max + 16:
        raise UsageError(f"theta_points must be >= {8 * k_max + 16} for k_max={k_max}")
    if not (0.0 <= I_min < I_max):
        raise UsageError("need 0 <= I_min < I_max")
    if panels < 1 or n_nodes % panels != 0:
        raise UsageError("panels must divide n_nodes")
    span = I_max - I_min
    x, w = np.polynomial.legendre.leggauss(int(n_nodes) // panels)
    if panels == 1:
        nodes = I_min + 0.5 * span * (x + 1.0)
        weights = 0.5 * span * w
    else:
        width = span / panels
        lefts = I_min + width * np.arange(panels)
        nodes = (lefts[:, None] + 0.5 * width * (x[None, :] + 1.0)).ravel()
        weights = np.tile(0.5 * width * w, panels)

    theta = np.arange(Q) * (TWO_PI / Q)
    g_vals = np.asarray(G(nodes[:, None], theta[None, :]), dtype=complex)
    g_fft = np.fft.fft(g_vals, axis=1) / Q
    k_values = np.arange(-k_max, k_max + 1)
    G_hat = np.stack([g_fft[:, k % Q] for k in k_values])

    rho_vals = np.asarray(density_value(rho, nodes[:, None], theta[None, :]), dtype=complex)
    rho_fft = np.fft.fft(rho_vals, axis=1) / Q
    rho_k_values = np.arange(-2 * k_max, 2 * k_max + 1)
    rho_hat = np.stack([rho_fft[:, k % Q] for k in rho_k_values])

    strengths = np.array([
        float(np.dot(weights, np.abs(G_hat[i]) * np.abs(rho_hat[-k_values[i] + 2 * k_max])))
        for i in range(k_values.size)
    ])
    head = float(strengths.max())
    tail = float(max(strengths[0], strengths[-1]))
    tail_fraction = tail / head if head > 0.0 else 0.0
    if tail_fraction > 1e-3:
        warnings.warn(
            f"mode truncation tail is {tail_fraction:.2e} of the head; "
            "raise k_max for this observable/density pair",
            RuntimeWarning, stacklevel=2,
        )
    return SpectralTable(nodes=nodes, weights=weights,
                         omega=np.asarray(model.omega(nodes), dtype=float),
                         k_values=k_values, G_hat=G_hat,
                         rho_k_values=rho_k_values, rho_hat=rho_hat,
                         I_range=(I_min, I_max), theta_points=Q,
                         tail_fraction=tail_fraction)


# --------------------------------------------------------------------------- #
# mode damping factors
# --------------------------------------------------------------------------- #

ModeFactorFn = Callable[[int, np.ndarray], np.ndarray]
# (k, j_chunk) -> array broadcastable to (len(j_chunk), n_nodes)


def _factor_from_model(table: SpectralTable, noise) -> ModeFactorFn:
    """Build the a_j(k) evaluator the mean reduction multiplies in."""
    if noise is None or isinstance(noise, NoNoise):
        return lambda k, j: np.ones((j.size, 1))
    if isinstance(noise, BrownianNoise):
        c = noise.c

        def brownian(k, j):
            return np.exp(-0.5 * (c * k) ** 2 * j)[:, None]

        return brownian
    if isinstance(noise, IIDIncrementNoise):
        c = noise.c
        char = noise.char_fn

        def iid(k, j):
            base = complex(char(c * k))
            return np.power(base, j.astype(float))[:, None]

        return iid
    if isinstance(noise, AR1Noise):
        c = noise.c

        def ar1(k, j):
            var = noise.marginal_variance(j)
            return np.exp(-0.5 * (c * k) ** 2 * var)[:, None]

        return ar1
    if isinstance(noise, ResonantCounterexample):
        omega = table.omega

        def resonant(k, j):
            # same floats as the rotation phase, so the product cancels exactly
            return np.exp(-1j * np.outer(j, k * omega))

        return resonant
    if isinstance(noise, CustomProcess) and noise.char_sequence is not None:
        seq = noise.char_sequence

        def custom(k, j):
            return np.array([complex(seq(k, int(jj))) for jj in j])[:, None]

        return custom
    if callable(noise):
        def from_callable(k, j):
            vals = [np.asarray(noise(k, int(jj))) for jj in j]
            out = np.stack([np.broadcast_to(v, (table.nodes.size,)) if v.ndim else
                            np.full(table.nodes.size, complex(v)) for v in vals])
            return out

        return from_callable
    raise UnsupportedError(f"no characteristic sequence available for {noise!r}")


# --------------------------------------------------------------------------- #
# means and Cesaro averages
# --------------------------------------------------------------------------- #

def mean_series(table: SpectralTable, j_values, noise=None,
                modes: Sequence[int] | None = None,
                j_chunk: int = 512) -> np.ndarray:
    """<G>_j for each j, as a complex array aligned with j_values.

    noise: None for the deterministic map, a perturbation model, or a callable
    char_seq(k, j) returning a_j(k) (scalar or per-node array).  modes
    restricts the sum to a subset of observable modes (used for per-mode
    Cesaro diagnostics).
    """
    j_arr = np.atleast_1d(np.asarray(j_values, dtype=int))
    if np.any(j_arr < 0):
        raise UsageError("j must be nonnegative")
    factor = _factor_from_model(table, noise)
    use_modes = table.k_values if modes is None else np.asarray(list(modes), dtype=int)
    out = np.zeros(j_arr.size, dtype=complex)
    scale = float(np.max(np.abs(table.G_hat)) * np.max(np.abs(table.rho_hat)))
    for k in use_modes:
        Wk = table.mode_weight(int(k))
        if scale > 0.0 and float(np.abs(Wk).sum()) < _PRUNE_REL * scale:
            continue
        phases = float(k) * table.omega
        for start in range(0, j_arr.size, j_chunk):
            jc = j_arr[start:start + j_chunk].astype(float)
            rot = np.exp(1j * np.outer(jc, phases))
            rot *= factor(int(k), jc)
            out[start:start + jc.size] += rot @ Wk
    return TWO_PI * out


def oracle_mean_deterministic(table: SpectralTable, j):
    """<G>_j under the deterministic map."""
    vals = mean_series(table, j, noise=None)
    return complex(vals[0]) if np.ndim(j) == 0 else vals


def oracle_mean_brownian(table: SpectralTable, j, c: float):
    """<G>_j under Brownian angle noise of intensity c."""
    vals = mean_series(table, j, noise=BrownianNoise(c=c))
    return complex(vals[0]) if np.ndim(j) == 0 else vals


def oracle_mean_general(table: SpectralTable, j, char_seq):
    """<G>_j with modewise factors from char_seq(k, j) (callable or model)."""
    vals = mean_series(table, j, noise=char_seq)
    return complex(vals[0]) if np.ndim(j) == 0 else vals


def limit_value(table: SpectralTable) -> complex:
    """2*pi int G_hat_0 rho_hat_0 dI: the k=0 term every convergent average tends to."""
    return complex(TWO_PI * table.mode_weight(0).sum())


def cesaro_series(means_1_to_N: np.ndarray) -> np.ndarray:
    """V_N = (1/N) sum_{j=1..N} <G>_j for every N, from the j=1..N mean series."""
    vals = np.asarray(means_1_to_N)
    if vals.ndim != 1 or vals.size == 0:
        raise UsageError("need a nonempty 1-d mean series starting at j=1")
    return np.cumsum(vals) / np.arange(1, vals.size + 1)


def cesaro_average(table: SpectralTable, N: int, noise=None) -> complex:
    """V_N for a single N (j=0 excluded by construction)."""
    if N < 1:
        raise UsageError("N must be >= 1")
    means = mean_series(table, np.arange(1, N + 1), noise=noise)
    return complex(means.mean())


def cesaro_ladder(table: SpectralTable, N_values, noise=None,
                  modes: Sequence[int] | None = None) -> np.ndarray:
    """V_N at each rung of an increasing N ladder, from one mean-series pass."""
    N_arr = np.asarray(N_values, dtype=int)
    if np.any(N_arr < 1) or np.any(np.diff(N_arr) <= 0):
        raise UsageError("N ladder must be strictly increasing and >= 1")
    means = mean_series(table, np.arange(1, int(N_arr.max()) + 1), noise=noise, modes=modes)
    all_V = cesaro_series(means)
    return all_V[N_arr - 1]


# --------------------------------------------------------------------------- #
# covariances
# --------------------------------------------------------------------------- #

def _pair_damping(noise, m: int, n: int, j, h: int):
    """E[e^{ic((m+n) X_j + n (X_{j+h}-X_j))}] as (per-j factor, per-pair constant).

    Needs independent increments; the Brownian case is
    exp(-c^2 (m+n)^2 j / 2) * exp(-c^2 n^2 h / 2).
    """
    if noise is None or isinstance(noise, NoNoise):
        return np.ones(np.size(j)), 1.0 + 0.0j
    if isinstance(noise, BrownianNoise):
        c = noise.c
        per_j = np.exp(-0.5 * (c * (m + n)) ** 2 * np.asarray(j, dtype=float))
        const = complex(math.exp(-0.5 * (c * n) ** 2 * h))
        return per_j, const
    if isinstance(noise, IIDIncrementNoise):
        c = noise.c
        base = complex(noise.char_fn(c * (m + n)))
        per_j = np.power(base, np.asarray(j, dtype=float))
        const = complex(noise.char_fn(c * n)) ** h
        return per_j, const
    raise UnsupportedError(
        "oracle covariance needs independent increments (deterministic, Brownian, or iid walk); "
        "use the Monte Carlo estimator for other processes"
    )


def oracle_covariance(table: SpectralTable, j: int, h: int, noise=None) -> complex:
    """Cov(G at step j, G at step j+h) = E[G_j G_{j+h}] - E[G_j] E[G_{j+h}].

    Double modal sum over (m, n) with the density indexed at -(m+n); the plain
    (unconjugated) product is used, which for real observables is the ordinary
    covariance.
    """
    if j < 0 or h < 0:
        raise UsageError("j and h must be nonnegative")
    k_max = int(table.k_values[-1])
    raw = 0.0 + 0.0j
    scale = float(np.max(np.abs(table.G_hat)) ** 2 * np.max(np.abs(table.rho_hat)))
    for m in range(-k_max, k_max + 1):
        gm = table.g_row(m)
        for n in range(-k_max, k_max + 1):
            W = table.weights * gm * table.g_row(n) * table.rho_row(-(m + n))
            if scale > 0.0 and float(np.abs(W).sum()) < _PRUNE_REL * scale:
                continue
            per_j, const = _pair_damping(noise, m, n, np.array([j]), h)
            phases = np.exp(1j * ((m + n) * float(j) + n * float(h)) * table.omega)
            raw += const * per_j[0] * np.dot(W, phases)
    raw *= TWO_PI
    mean_j, mean_jh = mean_series(table, np.array([j, j + h]), noise=noise)
    return complex(raw - mean_j * mean_jh)


def _geom_avg(z: np.ndarray, J: int) -> np.ndarray:
    """(1/J) sum_{j=1..J} z^j, elementwise, stable at z == 1."""
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    near_one = np.abs(1.0 - z) < 1e-12
    zn = np.where(near_one, 0.0, z)
    out = zn * (1.0 - zn ** J) / (J * (1.0 - zn))
    if np.any(near_one):
        out = np.where(near_one, 1.0 + 0.0j, out)
    return out


def oracle_avg_lag_covariance(table: SpectralTable, N: int, h: int, noise=None) -> complex:
    """A_{N,h} = (1/(N-h)) sum_{j=1..N-h} Cov(G_j, G_{j+h}), in closed form.

    The j-average of each (m, n) term is a geometric mean over
    zeta = damping * e^{i (m+n) omega} at every node, so no j loop is needed.
    """
    if h < 0 or N - h < 1:
        raise UsageError("need h >= 0 and N - h >= 1")
    J = N - h
    k_max = int(table.k_values[-1])
    raw = 0.0 + 0.0j
    scale = float(np.max(np.abs(table.G_hat)) ** 2 * np.max(np.abs(table.rho_hat)))
    for m in range(-k_max, k_max + 1):
        gm = table.g_row(m)
        for n in range(-k_max, k_max + 1):
            W = table.weights * gm * table.g_row(n) * table.rho_row(-(m + n))
            if scale > 0.0 and float(np.abs(W).sum()) < _PRUNE_REL * scale:
                continue
            if noise is None or isinstance(noise, NoNoise):
                damp1, const = 1.0 + 0.0j, 1.0 + 0.0j
            elif isinstance(noise, BrownianNoise):
                damp1 = complex(math.exp(-0.5 * (noise.c * (m + n)) ** 2))
                const = complex(math.exp(-0.5 * (noise.c * n) ** 2 * h))
            elif isinstance(noise, IIDIncrementNoise):
                damp1 = complex(noise.char_fn(noise.c * (m + n)))
                const = complex(noise.char_fn(noise.c * n)) ** h
            else:
                raise UnsupportedError(
                    "oracle covariance needs independent increments; "
                    "use the Monte Carlo estimator for other processes"
                )
            zeta = damp1 * np.exp(1j * (m + n) * table.omega)
            phase_h = np.exp(1j * n * float(h) * table.omega)
            raw += const * np.dot(W * phase_h, _geom_avg(zeta, J))
    raw *= TWO_PI
    means = mean_series(table, np.arange(1, N + 1), noise=noise)
    mean_prod = np.mean(means[:J] * means[h:h + J])
    return complex(raw - mean_prod)
