"""Phase-space primitives for one-degree-of-freedom integrable maps.

Action-angle coordinates (I, theta) on the cylinder (0, inf) x [0, 2*pi),
polynomial Hamiltonians h(I) with frequency omega = h'(I), observables with
Fourier-mode access, the canonical transform q + i*p = sqrt(2I) * e^{-i*theta},
and nonresonance scans of k*omega(I) against 2*pi*Z.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DegeneratePointError, DomainError, UsageError

TWO_PI = 2.0 * math.pi


def wrap_angle(theta):
    """Reduce an angle (scalar or array) to the canonical torus interval [0, 2*pi)."""
    wrapped = np.mod(theta, TWO_PI)
    # np.mod can return the full period for tiny negative inputs; fold it back.
    wrapped = np.where(wrapped >= TWO_PI, wrapped - TWO_PI, wrapped)
    if np.isscalar(theta) or np.ndim(theta) == 0:
        return float(wrapped)
    return wrapped


def angle_distance(a, b):
    """Shortest signed distance a - b on the torus, in (-pi, pi]."""
    d = np.mod(np.asarray(a, dtype=float) - np.asarray(b, dtype=float) + math.pi, TWO_PI) - math.pi
    d = np.where(d == -math.pi, math.pi, d)
    if np.ndim(d) == 0:
        return float(d)
    return d


def _split_two26(x: float) -> tuple[float, float]:
    # Dekker-style split: hi carries ~26 mantissa bits so j*hi is exact for j < 2^26.
    hi = math.ldexp(math.floor(math.ldexp(x, 26)), -26)
    return hi, x - hi


def rotation_angle(theta0, omega, j):
    """theta0 + j*omega reduced mod 2*pi without losing precision at large j.

    omega is split into a 26-bit head and a tail so the product j*head is exact
    for integer j up to 10^7; both pieces are reduced separately.  Keeps the
    wrap error below ~1e-9 through j = 10^6 and beyond.
    """
    j = np.asarray(j)
    if np.any(j < 0):
        raise DomainError("iteration count must be nonnegative")
    omega_arr = np.asarray(omega, dtype=float)
    if omega_arr.ndim == 0:
        hi, lo = _split_two26(float(omega_arr))
        main = np.fmod(j * hi, TWO_PI)
        rest = j * lo
    else:
        hi = np.ldexp(np.floor(np.ldexp(omega_arr, 26)), -26)
        lo = omega_arr - hi
        main = np.fmod(j * hi, TWO_PI)
        rest = j * lo
    return wrap_angle(np.asarray(theta0, dtype=float) + main + np.fmod(rest, TWO_PI))


@dataclass(frozen=True)
class ActionAngleState:
    """Batch of phase points: actions in (0, inf), angles stored wrapped."""

    action: np.ndarray
    angle: np.ndarray

    def __post_init__(self):
        action = np.atleast_1d(np.asarray(self.action, dtype=float))
        angle = np.atleast_1d(np.asarray(self.angle, dtype=float))
        if action.shape != angle.shape:
            raise UsageError("action and angle must have matching shapes")
        if np.any(~np.isfinite(action)) or np.any(action <= 0.0):
            raise DomainError("actions must be finite and strictly positive")
        object.__setattr__(self, "action", action)
        object.__setattr__(self, "angle", np.asarray(wrap_angle(angle), dtype=float))

    def __len__(self) -> int:
        return self.action.size


@dataclass(frozen=True)
class FrequencyModel:
    """Polynomial Hamiltonian h(I) = sum_m coeffs[m] * I^m with omega = h'(I).

    The derivative coefficients are computed once at the coefficient level, so
    omega() involves no finite differencing.
    """

    coeffs: tuple[float, ...]
    domain: tuple[float, float] = (0.0, math.inf)
    _dcoeffs: tuple[float, ...] = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.coeffs) < 2:
            raise UsageError("need at least a linear term for a nontrivial frequency")
        d = tuple((m + 1) * c for m, c in enumerate(self.coeffs[1:]))
        object.__setattr__(self, "_dcoeffs", d)

    @classmethod
    def cubic(cls, alpha: float, beta: float, gamma: float) -> "FrequencyModel":
        """h(I) = alpha*I + beta*I^2 + gamma*I^3, the benchmark family."""
        return cls(coeffs=(0.0, float(alpha), float(beta), float(gamma)))

    def _check_domain(self, action) -> np.ndarray:
        arr = np.asarray(action, dtype=float)
        lo, hi = self.domain
        if np.any(arr < lo) or np.any(arr > hi):
            raise DomainError(f"action outside model domain [{lo}, {hi}]")
        return arr

    def hamiltonian(self, action):
        arr = self._check_domain(action)
        out = np.polynomial.polynomial.polyval(arr, self.coeffs)
        return float(out) if np.ndim(action) == 0 else out

    def omega(self, action):
        """Frequency map omega(I) = h'(I)."""
        arr = self._check_domain(action)
        out = np.polynomial.polynomial.polyval(arr, self._dcoeffs)
        return float(out) if np.ndim(action) == 0 else out

    def omega_derivative(self, action):
        """Twist d(omega)/dI, from a second coefficient-level differentiation."""
        arr = self._check_domain(action)
        dd = tuple((m + 1) * c for m, c in enumerate(self._dcoeffs[1:]))
        out = np.polynomial.polynomial.polyval(arr, dd) if dd else np.zeros_like(arr)
        return float(out) if np.ndim(action) == 0 else out


@dataclass(frozen=True)
class Observable:
    """Phase-space observable G(I, theta), vectorized over broadcast inputs.

    sup_bound is the (truncated-domain) sup norm used by tail and Lindeberg
    bounds; bound_estimated marks values that came from a grid scan rather
    than an exact expression.
    """

    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    name: str = "G"
    sup_bound: float | None = None
    bound_estimated: bool = False

    def __call__(self, action, theta):
        return self.fn(np.asarray(action, dtype=float), np.asarray(theta, dtype=float))

    def with_estimated_bound(self, I_max: float, grid: int = 256) -> "Observable":
        """Attach a sup-norm estimate from a grid scan, inflated 5% and flagged."""
        I = np.linspace(I_max / grid, I_max, grid)
        th = np.linspace(0.0, TWO_PI, grid, endpoint=False)
        vals = np.abs(self(I[:, None], th[None, :]))
        est = float(vals.max()) * 1.05
        return Observable(fn=self.fn, name=self.name, sup_bound=est, bound_estimated=True)


def complex_position(I_max: float = 2.0) -> Observable:
    """G = sqrt(2I) e^{-i theta} = q + i p, the complex position of the point."""

    def fn(I, theta):
        return np.sqrt(2.0 * I) * np.exp(-1j * theta)

    return Observable(fn=fn, name="sqrt2I_exp", sup_bound=math.sqrt(2.0 * I_max))


def action_cosine(I_max: float = 2.0) -> Observable:
    """G = I cos(theta), the real observable used for the CLT diagnostics."""

    def fn(I, theta):
        return I * np.cos(theta)

    return Observable(fn=fn, name="I_cos", sup_bound=float(I_max))


def theta_average(G: Observable, action, n_points: int = 256):
    """Angle average Gbar(I) = (1/2pi) int G(I, theta) dtheta via the periodic trapezoid rule."""
    if n_points < 8:
        raise UsageError("need at least 8 quadrature points")
    theta = np.arange(n_points) * (TWO_PI / n_points)
    arr = np.asarray(action, dtype=float)
    vals = G(arr[..., None], theta)
    out = vals.mean(axis=-1)
    if np.ndim(action) == 0:
        out = complex(out)
        return out.real if abs(out.imag) < 1e-14 * (1.0 + abs(out.real)) else out
    return out


def canonical_to_action_angle(q, p):
    """(q, p) -> (I, theta) with q + i p = sqrt(2I) e^{-i theta}.  Unit Jacobian."""
    q_arr = np.asarray(q, dtype=float)
    p_arr = np.asarray(p, dtype=float)
    I = 0.5 * (q_arr * q_arr + p_arr * p_arr)
    if np.any(I == 0.0):
        raise DegeneratePointError("the origin q = p = 0 has no angle")
    theta = wrap_angle(-np.arctan2(p_arr, q_arr))
    if np.ndim(q) == 0 and np.ndim(p) == 0:
        return float(I), float(theta)
    return I, theta


def action_angle_to_canonical(action, theta):
    """(I, theta) -> (q, p) = (sqrt(2I) cos theta, -sqrt(2I) sin theta)."""
    I = np.asarray(action, dtype=float)
    if np.any(I < 0.0):
        raise DomainError("action must be nonnegative")
    th = np.asarray(theta, dtype=float)
    r = np.sqrt(2.0 * I)
    q, p = r * np.cos(th), -r * np.sin(th)
    if np.ndim(action) == 0 and np.ndim(theta) == 0:
        return float(q), float(p)
    return q, p


@dataclass(frozen=True)
class NonresonanceReport:
    """Result of a grid scan of dist(k*omega(I), 2*pi*Z)."""

    k_max: int
    tolerance: float
    grid: np.ndarray
    margins: np.ndarray          # (len(grid), k_max), distance to the nearest 2*pi multiple
    worst_margin: float
    resonant_points: tuple       # (I, k, nearest integer m) triples with margin <= tolerance

    @property
    def passed(self) -> bool:
        return len(self.resonant_points) == 0


def check_nonresonance(model: FrequencyModel, grid: Sequence[float], k_max: int,
                       tolerance: float = 1e-8) -> NonresonanceReport:
    """Scan k*omega(I) over the action grid for near-multiples of 2*pi.

    Margins for -k equal those for k, so only k >= 1 is scanned.  A point is
    resonant when its margin does not exceed the tolerance.
    """
    if k_max < 1:
        raise UsageError("k_max must be >= 1")
    grid_arr = np.asarray(grid, dtype=float)
    if grid_arr.ndim != 1 or grid_arr.size == 0:
        raise UsageError("grid must be a nonempty 1-d array of actions")
    omega = np.asarray(model.omega(grid_arr), dtype=float)
    k = np.arange(1, k_max + 1)
    x = omega[:, None] * k[None, :]
    margins = np.abs(np.mod(x + math.pi, TWO_PI) - math.pi)
    resonant = []
    bad = np.argwhere(margins <= tolerance)
    for i, ki in bad:
        m = int(round(x[i, ki] / TWO_PI))
        resonant.append((float(grid_arr[i]), int(k[ki]), m))
    return NonresonanceReport(
        k_max=int(k_max),
        tolerance=float(tolerance),
        grid=grid_arr,
        margins=margins,
        worst_margin=float(margins.min()),
        resonant_points=tuple(resonant),
    )
