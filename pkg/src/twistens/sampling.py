"""Initial ensembles: densities on the cylinder, exact samplers, seed streams.

Densities are normalized over (0, inf) x [0, 2*pi); the Gaussian phase-space
family is the pushforward of an isotropic Gaussian in (q, p) through the unit-
Jacobian canonical transform, so it can be sampled exactly and its angular
Fourier coefficients have a Bessel closed form.

Seeding is counter-based: substream(purpose, index) keys an independent Philox
generator off (master_seed, purpose, index), so chunked parallel draws are
bitwise reproducible for any worker count.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

from .errors import DomainError, UnsupportedError, UsageError
from .phase import TWO_PI, canonical_to_action_angle, wrap_angle

# stream purposes; keep stable, they are part of the reproducibility contract
STREAM_INIT = 0
STREAM_NOISE = 1
STREAM_CLT = 2
STREAM_SCRATCH = 9


@dataclass(frozen=True)
class SeedPlan:
    """Pure derivation master seed -> independent substreams."""

    master_seed: int

    def __post_init__(self):
        if not (0 <= int(self.master_seed) < 2 ** 64):
            raise UsageError("master seed must fit in 64 bits")

    def substream(self, purpose: int, index: int) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.master_seed),
                                    spawn_key=(int(purpose), int(index)))
        return np.random.Generator(np.random.Philox(ss))


# --------------------------------------------------------------------------- #
# densities
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class GaussianPhaseSpace:
    """Gaussian cloud in (q, p): mean (q0, p0), covariance eps0 * Id.

    In action-angle variables:
        rho(I, theta) = (1/(2 pi eps0)) exp(-I/eps0 - (q0^2+p0^2)/(2 eps0))
                        * exp(sqrt(2I) (q0 cos(theta) - p0 sin(theta)) / eps0)
    """

    q0: float
    p0: float = 0.0
    eps0: float = 0.01

    def __post_init__(self):
        if self.eps0 <= 0.0:
            raise DomainError("eps0 must be positive")

    def density(self, action, theta):
        I = np.asarray(action, dtype=float)
        if np.any(I < 0.0):
            raise DomainError("action must be nonnegative")
        th = np.asarray(theta, dtype=float)
        r = np.sqrt(2.0 * I)
        expo = (-I - 0.5 * (self.q0 ** 2 + self.p0 ** 2)
                + r * (self.q0 * np.cos(th) - self.p0 * np.sin(th))) / self.eps0
        out = np.exp(expo) / (TWO_PI * self.eps0)
        return float(out) if np.ndim(out) == 0 else out

    def fourier_coeff_exact(self, k: int, action):
        """Closed-form rho_hat_k(I) via the scaled Bessel function.

        rho_hat_k(I) = (1/(2 pi eps0)) I_k(R) e^{-i k phi0} e^{-I/eps0 - r0^2/(2 eps0)}
        with R = sqrt(2I) r0 / eps0, r0 = |(q0, -p0)|, phi0 = atan2(-p0, q0).
        Evaluated as ive(k, R) * exp(R - ...) so nothing overflows: the combined
        exponent is -(sqrt(2I) - r0)^2 / (2 eps0) <= 0.
        """
        I = np.asarray(action, dtype=float)
        if np.any(I < 0.0):
            raise DomainError("action must be nonnegative")
        r0 = math.hypot(self.q0, self.p0)
        phi0 = math.atan2(-self.p0, self.q0)
        u = np.sqrt(2.0 * I)
        R = r0 * u / self.eps0
        radial = special.ive(k, R) * np.exp(-0.5 * (u - r0) ** 2 / self.eps0)
        out = radial / (TWO_PI * self.eps0) * np.exp(-1j * k * phi0)
        return complex(out) if np.ndim(out) == 0 else out

    def sample(self, n: int, rng: np.random.Generator):
        """Exact draw: Gaussian in (q, p), then the canonical transform."""
        q = self.q0 + math.sqrt(self.eps0) * rng.standard_normal(n)
        p = self.p0 + math.sqrt(self.eps0) * rng.standard_normal(n)
        # the origin is a null set; nudge the (practically impossible) exact hit
        bad = (q == 0.0) & (p == 0.0)
        if np.any(bad):
            q[bad] = np.finfo(float).tiny
        return canonical_to_action_angle(q, p)

    def mean_action(self) -> float:
        """E[I] = (q0^2 + p0^2)/2 + eps0."""
        return 0.5 * (self.q0 ** 2 + self.p0 ** 2) + self.eps0


@dataclass(frozen=True)
class UniformBandCosine:
    """rho(I, theta) = (1 + a cos theta) / (2 pi (I_hi - I_lo)) on an action band.

    Analytic in theta with exactly three Fourier modes and O(1) density at the
    band edges; the configuration that makes boundary-driven 1/j mean decay
    visible.
    """

    I_lo: float
    I_hi: float
    coupling: float = 0.8

    def __post_init__(self):
        if not (0.0 <= self.I_lo < self.I_hi):
            raise DomainError("need 0 <= I_lo < I_hi")
        if not (0.0 <= self.coupling < 1.0):
            raise DomainError("coupling must lie in [0, 1) to keep the density positive")

    def density(self, action, theta):
        I = np.asarray(action, dtype=float)
        th = np.asarray(theta, dtype=float)
        band = (I >= self.I_lo) & (I <= self.I_hi)
        out = (1.0 + self.coupling * np.cos(th)) / (TWO_PI * (self.I_hi - self.I_lo))
        out = np.where(band, out, 0.0)
        return float(out) if np.ndim(out) == 0 else out

    def fourier_coeff_exact(self, k: int, action):
        I = np.asarray(action, dtype=float)
        band = ((I >= self.I_lo) & (I <= self.I_hi)).astype(float)
        norm = TWO_PI * (self.I_hi - self.I_lo)
        if k == 0:
            val = band / norm
        elif abs(k) == 1:
            val = band * (0.5 * self.coupling / norm)
        else:
            val = np.zeros_like(band)
        out = val.astype(complex)
        return complex(out) if np.ndim(out) == 0 else out

    def sample(self, n: int, rng: np.random.Generator):
        I = rng.uniform(self.I_lo, self.I_hi, size=n)
        # rejection against the flat envelope (1 + a)/2pi
        out = np.empty(n)
        filled = 0
        while filled < n:
            m = max(64, int(1.3 * (n - filled)))
            th = rng.uniform(0.0, TWO_PI, size=m)
            u = rng.uniform(0.0, 1.0 + self.coupling, size=m)
            acc = th[u <= 1.0 + self.coupling * np.cos(th)]
            take = min(acc.size, n - filled)
            out[filled:filled + take] = acc[:take]
            filled += take
        return I, out


@dataclass(frozen=True)
class CustomDensity:
    """Evaluator-backed density; sampling only if a sampler is supplied."""

    pdf: Callable[[np.ndarray, np.ndarray], np.ndarray]
    sampler: Callable[[int, np.random.Generator], tuple] | None = None
    label: str = "custom"

    def density(self, action, theta):
        return self.pdf(np.asarray(action, dtype=float), np.asarray(theta, dtype=float))

    def sample(self, n: int, rng: np.random.Generator):
        if self.sampler is None:
            raise UnsupportedError("this density has no sampler")
        return self.sampler(n, rng)


InitialDensity = GaussianPhaseSpace | UniformBandCosine | CustomDensity


def density_value(rho: InitialDensity, action, theta):
    """rho(I, theta), vectorized over broadcast inputs."""
    return rho.density(action, theta)


def rho_fourier_coeff(rho: InitialDensity, k: int, action, quadrature_points: int = 512):
    """Angular Fourier coefficient rho_hat_k(I) by periodic trapezoid quadrature.

    Spectrally accurate for smooth densities.  The closed-form Bessel route on
    GaussianPhaseSpace is independent of this one and is cross-checked against
    it in the tests.
    """
    Q = int(quadrature_points)
    if Q < 4 * abs(k) + 16:
        raise UsageError(f"need >= {4 * abs(k) + 16} quadrature points for mode {k}")
    theta = np.arange(Q) * (TWO_PI / Q)
    I = np.asarray(action, dtype=float)
    vals = rho.density(I[..., None], theta)
    phases = np.exp(-1j * k * theta)
    out = (vals * phases).mean(axis=-1)
    return complex(out) if np.ndim(action) == 0 else out


def density_mass(rho: InitialDensity, I_max: float, n_nodes: int = 400,
                 quadrature_points: int = 256) -> float:
    """Total mass over (0, I_max] x [0, 2pi) by Gauss-Legendre x trapezoid."""
    nodes, weights = gauss_legendre_nodes(I_max, n_nodes)
    rho0 = rho_fourier_coeff(rho, 0, nodes, quadrature_points)
    return float(TWO_PI * np.dot(weights, np.real(rho0)))


def gauss_legendre_nodes(I_max: float, n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights mapped to (0, I_max]."""
    if n_nodes < 2:
        raise UsageError("need at least 2 quadrature nodes")
    if I_max <= 0.0:
        raise DomainError("I_max must be positive")
    x, w = np.polynomial.legendre.leggauss(int(n_nodes))
    nodes = 0.5 * I_max * (x + 1.0)
    weights = 0.5 * I_max * w
    return nodes, weights


def sample_initial(rho: InitialDensity, M: int, plan: SeedPlan,
                   chunk: int = 8192) -> tuple[np.ndarray, np.ndarray]:
    """M initial points in fixed-size chunks, one substream per chunk.

    The chunk -> substream map depends only on (master_seed, chunk index), so
    the result is bitwise identical however the chunks are scheduled.
    """
    if M < 1:
        raise UsageError("M must be >= 1")
    I_out = np.empty(M)
    th_out = np.empty(M)
    for ci, start in enumerate(range(0, M, chunk)):
        n = min(chunk, M - start)
        rng = plan.substream(STREAM_INIT, ci)
        I, th = rho.sample(n, rng)
        I_out[start:start + n] = I
        th_out[start:start + n] = wrap_angle(th)
    return I_out, th_out
