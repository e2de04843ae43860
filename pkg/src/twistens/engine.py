"""Chunked Monte Carlo drivers.

Replicas are processed in fixed-size chunks; chunk i always draws from
substream(purpose, i) and partial results are reduced in chunk order, so the
output bytes do not depend on how many worker threads ran.  Accumulation uses
plain ufunc sums rather than BLAS reductions for the same reason.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dynamics import PerturbationModel, path_cumulative, snapshot_cumulative
from .errors import UsageError
from .phase import FrequencyModel, Observable, rotation_angle, wrap_angle
from .sampling import (STREAM_CLT, STREAM_INIT, STREAM_NOISE, InitialDensity,
                       SeedPlan)


@dataclass(frozen=True)
class SnapshotResult:
    """Ensemble moments (and optionally raw states) at sparse time steps."""

    j_values: np.ndarray         # (J,)
    count: int
    mean: np.ndarray             # complex, (J,)
    stderr_re: np.ndarray        # (J,)
    stderr_im: np.ndarray        # (J,)
    mean_energy: np.ndarray      # (J,)  ensemble mean of h(I) at each snapshot
    energy_range: tuple[float, float]
    max_energy_drift: float      # max_j |mean_energy_j - mean_energy_0|
    actions: np.ndarray | None   # (M,) when states were kept
    angles: np.ndarray | None    # (M, J) when states were kept

    @property
    def centroid_norm(self) -> np.ndarray:
        return np.abs(self.mean)


def _chunk_ranges(total: int, chunk: int):
    if total < 1 or chunk < 1:
        raise UsageError("need total >= 1 and chunk >= 1")
    return [(ci, ci * chunk, min((ci + 1) * chunk, total))
            for ci in range((total + chunk - 1) // chunk)]


def ensemble_snapshots(rho: InitialDensity, model: FrequencyModel,
                       noise: PerturbationModel | None, G: Observable,
                       M: int, j_values, plan: SeedPlan, *,
                       threads: int = 1, chunk: int = 8192,
                       keep_states: bool = True) -> SnapshotResult:
    """Propagate M replicas to each j in j_values and take ensemble moments.

    Noise values at the sparse steps come from the exact skip-ahead sampler,
    so the cost is O(M * len(j_values)) regardless of max(j).
    """
    j_arr = np.asarray(sorted(set(int(j) for j in np.atleast_1d(j_values))), dtype=int)
    if j_arr.size == 0 or j_arr[0] < 0:
        raise UsageError("need at least one nonnegative snapshot step")
    J = j_arr.size
    c = 0.0 if noise is None else noise.c

    def worker(rng_spec):
        ci, lo, hi = rng_spec
        n = hi - lo
        I, theta0 = rho.sample(n, plan.substream(STREAM_INIT, ci))
        if noise is None or c == 0.0:
            X = np.zeros((n, J))
        else:
            pos = j_arr[j_arr > 0]
            X = np.zeros((n, J))
            if pos.size:
                rng_noise = plan.substream(STREAM_NOISE, ci)
                X[:, J - pos.size:] = snapshot_cumulative(noise, pos, n, rng_noise)
        omega = model.omega(I)
        energy = model.hamiltonian(I)
        e_sum = float(energy.sum())
        sum_re = np.zeros(J)
        sum_im = np.zeros(J)
        sum_re2 = np.zeros(J)
        sum_im2 = np.zeros(J)
        e_sums = np.empty(J)
        thetas = np.empty((n, J)) if keep_states else None
        for idx, j in enumerate(j_arr):
            th = rotation_angle(theta0, omega, int(j))
            if c != 0.0 and j > 0:
                th = wrap_angle(th + c * X[:, idx])
            vals = np.asarray(G(I, th), dtype=complex)
            re, im = vals.real, vals.imag
            sum_re[idx] = re.sum()
            sum_im[idx] = im.sum()
            sum_re2[idx] = (re * re).sum()
            sum_im2[idx] = (im * im).sum()
            e_sums[idx] = e_sum
            if keep_states:
                thetas[:, idx] = th
        return (ci, n, sum_re, sum_im, sum_re2, sum_im2, e_sums,
                float(energy.min()), float(energy.max()),
                I if keep_states else None, thetas)

    ranges = _chunk_ranges(M, chunk)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(worker, ranges))
    else:
        parts = [worker(r) for r in ranges]

    sum_re = np.zeros(J)
    sum_im = np.zeros(J)
    sum_re2 = np.zeros(J)
    sum_im2 = np.zeros(J)
    e_sums = np.zeros(J)
    e_min, e_max = np.inf, -np.inf
    actions = [] if keep_states else None
    angles = [] if keep_states else None
    for part in parts:                       # parts arrive in chunk order
        (_, n, r1, i1, r2, i2, es, emn, emx, I_part, th_part) = part
        sum_re += r1
        sum_im += i1
        sum_re2 += r2
        sum_im2 += i2
        e_sums += es
        e_min = min(e_min, emn)
        e_max = max(e_max, emx)
        if keep_states:
            actions.append(I_part)
            angles.append(th_part)

    mean_re = sum_re / M
    mean_im = sum_im / M
    var_re = np.maximum(sum_re2 / M - mean_re ** 2, 0.0) * (M / max(M - 1, 1))
    var_im = np.maximum(sum_im2 / M - mean_im ** 2, 0.0) * (M / max(M - 1, 1))
    mean_energy = e_sums / M
    drift = float(np.max(np.abs(mean_energy - mean_energy[0])))
    return SnapshotResult(
        j_values=j_arr, count=M, mean=mean_re + 1j * mean_im,
        stderr_re=np.sqrt(var_re / M), stderr_im=np.sqrt(var_im / M),
        mean_energy=mean_energy, energy_range=(e_min, e_max),
        max_energy_drift=drift,
        actions=np.concatenate(actions) if keep_states else None,
        angles=np.concatenate(angles, axis=0) if keep_states else None,
    )


def replica_matrix(rho: InitialDensity, model: FrequencyModel,
                   noise: PerturbationModel | None, G: Observable,
                   R: int, N: int, plan: SeedPlan, *,
                   threads: int = 1, chunk: int = 2048,
                   init_purpose: int = STREAM_INIT,
                   noise_purpose: int = STREAM_NOISE) -> np.ndarray:
    """Real (R, N) matrix of G along each replica's orbit, steps j = 1..N.

    Every replica gets one initial draw and one noise path.  Meant for
    desk-scale covariance work; the memory cost is R * N doubles.
    """
    if N < 1:
        raise UsageError("N must be >= 1")
    c = 0.0 if noise is None else noise.c

    def worker(rng_spec):
        ci, lo, hi = rng_spec
        n = hi - lo
        I, theta0 = rho.sample(n, plan.substream(init_purpose, ci))
        omega = model.omega(I)
        if noise is None or c == 0.0:
            X = None
        else:
            X = path_cumulative(noise, N, n, plan.substream(noise_purpose, ci))
        out = np.empty((n, N))
        for j in range(1, N + 1):
            th = rotation_angle(theta0, omega, j)
            if X is not None:
                th = th + c * X[:, j - 1]
            out[:, j - 1] = np.real(G(I, th))
        return ci, out

    ranges = _chunk_ranges(R, chunk)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(worker, ranges))
    else:
        parts = [worker(r) for r in ranges]
    return np.concatenate([p[1] for p in parts], axis=0)


@dataclass(frozen=True)
class CLTAccumulation:
    """Streaming sums for normalized partial-sum statistics.

    raw2[k, j] holds sum over replicas of x_{j+1} x_{j+1+k} (0-based j), so
    lag covariances at full and half window come from the same array.
    """

    N: int
    H: int
    count: int
    rungs: np.ndarray            # (L,) partial-sum lengths
    samples: np.ndarray          # (R, L) values of S_n / sqrt(n), centered
    sum_x: np.ndarray            # (N,)
    raw2: np.ndarray             # (H+1, N)
    max_abs_x: float
    center: float


def clt_accumulate(rho: InitialDensity, model: FrequencyModel,
                   noise: PerturbationModel | None, G: Observable,
                   R: int, N: int, plan: SeedPlan, *, center: float,
                   rungs=(10, 100, 1000), H: int = 20,
                   threads: int = 1, chunk: int = 2048) -> CLTAccumulation:
    """Accumulate S_n / sqrt(n) samples and lag moments over R replicas.

    center is subtracted from every G value before summing (the limiting
    ensemble mean, so partial sums measure fluctuation only).  Memory stays
    O(R * len(rungs) + H * N) however large R is.
    """
    rung_arr = np.asarray(sorted(set(int(r) for r in rungs)), dtype=int)
    if rung_arr[0] < 1 or rung_arr[-1] > N:
        raise UsageError("rungs must lie in 1..N")
    if not 0 <= H < N:
        raise UsageError("need 0 <= H < N")
    c = 0.0 if noise is None else noise.c

    def worker(rng_spec):
        ci, lo, hi = rng_spec
        n = hi - lo
        I, theta0 = rho.sample(n, plan.substream(STREAM_CLT, 2 * ci))
        omega = model.omega(I)
        X = None
        if noise is not None and c != 0.0:
            X = path_cumulative(noise, N, n, plan.substream(STREAM_CLT, 2 * ci + 1))
        vals = np.empty((n, N))
        for j in range(1, N + 1):
            th = rotation_angle(theta0, omega, j)
            if X is not None:
                th = th + c * X[:, j - 1]
            vals[:, j - 1] = np.real(G(I, th))
        vals -= center
        csum = np.cumsum(vals, axis=1)
        samples = csum[:, rung_arr - 1] / np.sqrt(rung_arr)
        sum_x = vals.sum(axis=0)
        raw2 = np.zeros((H + 1, N))
        for k in range(H + 1):
            prod = vals[:, :N - k] * vals[:, k:]
            raw2[k, :N - k] = prod.sum(axis=0)
        return ci, n, samples, sum_x, raw2, float(np.abs(vals).max())

    ranges = _chunk_ranges(R, chunk)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(worker, ranges))
    else:
        parts = [worker(r) for r in ranges]

    sum_x = np.zeros(N)
    raw2 = np.zeros((H + 1, N))
    sample_parts = []
    max_abs = 0.0
    for ci, n, samples, sx, r2, mx in parts:
        sample_parts.append(samples)
        sum_x += sx
        raw2 += r2
        max_abs = max(max_abs, mx)
    return CLTAccumulation(N=N, H=H, count=R, rungs=rung_arr,
                           samples=np.concatenate(sample_parts, axis=0),
                           sum_x=sum_x, raw2=raw2, max_abs_x=max_abs,
                           center=float(center))
