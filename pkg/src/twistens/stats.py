"""Estimators and reports on top of the Monte Carlo engines.

Lag covariances are across-replica covariances averaged over time steps, so
no stationarity is assumed beyond what the data shows.  The limiting variance
adds twice the truncated lag sum to the marginal variance and reports a
fitted geometric bound for the truncated tail; standardization of partial-sum
samples always uses the sigma_star of the covariance report that produced it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .engine import CLTAccumulation, SnapshotResult
from .errors import UsageError

_LOG_FLOOR = 1e-300


# --------------------------------------------------------------------------- #
# mean comparison
# --------------------------------------------------------------------------- #

def mean_z_scores(result: SnapshotResult, oracle_values, floor: float = 1e-12):
    """Componentwise (MC - oracle) / stderr for each snapshot step.

    Returns (z_re, z_im) arrays.  The floor guards degenerate observables
    whose sample spread underflows.
    """
    oracle_values = np.asarray(oracle_values, dtype=complex)
    if oracle_values.shape != result.mean.shape:
        raise UsageError("oracle series shape does not match the snapshot set")
    se_re = np.maximum(result.stderr_re, floor)
    se_im = np.maximum(result.stderr_im, floor)
    z_re = (result.mean.real - oracle_values.real) / se_re
    z_im = (result.mean.imag - oracle_values.imag) / se_im
    return z_re, z_im


def centroid_norm(mean_values, q0: float):
    """|<G>_j| / |q0| per step, the normalized centroid magnitude."""
    if q0 == 0:
        raise UsageError("centroid normalization needs q0 != 0")
    return np.abs(np.asarray(mean_values, dtype=complex)) / abs(q0)


# --------------------------------------------------------------------------- #
# decay fits
# --------------------------------------------------------------------------- #

def rolling_max_envelope(y, window: int = 9):
    """Centered rolling maximum of |y|, tracing the oscillation envelope."""
    if window < 1:
        raise UsageError("envelope window must be >= 1")
    from scipy.ndimage import maximum_filter1d
    return maximum_filter1d(np.abs(np.asarray(y)).astype(float), size=window,
                            mode="nearest")


@dataclass(frozen=True)
class DecayFit:
    kind: str                    # "exponential" or "power_law"
    prefactor: float             # fitted |y| at x=0 (exponential) or x=1 (power law)
    rate: float | None           # exponential: |y| ~ A e^{-rate x}
    exponent: float | None       # power law:  |y| ~ A x^{exponent}
    r_squared: float
    n_used: int
    n_dropped: int
    log_residual_rms: float


def fit_decay(y, x=None, kind: str = "exponential", weights=None) -> DecayFit:
    """Log-linear least squares on |y|.

    weights="amplitude" weights each point by |y|^2, which is the
    delta-method variance weighting for log-transformed data and keeps
    near-zero dips from dominating the fit.  Nonpositive |y| are dropped.
    """
    y = np.abs(np.asarray(y, dtype=complex))
    x = np.arange(1, y.size + 1, dtype=float) if x is None else np.asarray(x, dtype=float)
    if x.shape != y.shape:
        raise UsageError("x and y must have matching shapes")
    keep = y > _LOG_FLOOR
    n_dropped = int((~keep).sum())
    y_k, x_k = y[keep], x[keep]
    if y_k.size < 4:
        raise UsageError("need at least 4 positive points to fit a decay")
    if kind in ("power_law", "power"):
        if np.any(x_k <= 0):
            raise UsageError("power-law fit needs positive x")
        design_x = np.log(x_k)
        kind = "power_law"
    elif kind == "exponential":
        design_x = x_k
    else:
        raise UsageError(f"unknown decay kind {kind!r}")
    logy = np.log(y_k)
    if weights is None:
        w = np.ones_like(logy)
    elif isinstance(weights, str) and weights == "amplitude":
        w = y_k ** 2
    else:
        w = np.asarray(weights, dtype=float)[keep]
        if np.any(w < 0):
            raise UsageError("weights must be nonnegative")
    sw = w.sum()
    if sw <= 0:
        raise UsageError("all fit weights vanished")
    xm = np.dot(w, design_x) / sw
    ym = np.dot(w, logy) / sw
    dx = design_x - xm
    denom = np.dot(w, dx * dx)
    if denom <= 0:
        raise UsageError("degenerate abscissa in decay fit")
    slope = np.dot(w, dx * (logy - ym)) / denom
    intercept = ym - slope * xm
    resid = logy - (intercept + slope * design_x)
    ss_res = float(np.dot(w, resid * resid))
    ss_tot = float(np.dot(w, (logy - ym) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res < 1e-24 else 0.0)
    rms = float(math.sqrt(ss_res / sw))
    if kind == "exponential":
        return DecayFit(kind=kind, prefactor=float(math.exp(intercept)),
                        rate=float(-slope), exponent=None, r_squared=r2,
                        n_used=int(y_k.size), n_dropped=n_dropped,
                        log_residual_rms=rms)
    return DecayFit(kind=kind, prefactor=float(math.exp(intercept)),
                    rate=None, exponent=float(slope), r_squared=r2,
                    n_used=int(y_k.size), n_dropped=n_dropped,
                    log_residual_rms=rms)


# --------------------------------------------------------------------------- #
# lag covariances and the limiting variance
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class CovarianceReport:
    N: int
    H: int
    count: int
    sigma2: float                # marginal variance, averaged over the last quarter of steps
    lag0: float                  # across-replica variance averaged over all steps
    lags: np.ndarray             # A_{N,k} for k = 1..H
    lags_half: np.ndarray        # same estimator on the first half window
    lag_stderr: np.ndarray | None
    plateau_gap: float           # max_k |lags - lags_half|
    sigma_star2: float           # sigma2 + 2 * sum(lags)
    tail_rate: float | None      # fitted geometric decay of |A_{N,k}|
    tail_bound: float            # bound on |2 * sum_{k>H}| from the fit (0 if fit failed)
    tail_fit_ok: bool

    @property
    def sigma_star(self) -> float:
        if self.sigma_star2 <= 0:
            raise UsageError("limiting variance estimate is not positive")
        return math.sqrt(self.sigma_star2)

    def to_jsonable(self) -> dict:
        return {
            "N": self.N, "H": self.H, "count": self.count,
            "sigma2": self.sigma2, "lag0": self.lag0,
            "lags": [float(v) for v in self.lags],
            "lags_half": [float(v) for v in self.lags_half],
            "lag_stderr": None if self.lag_stderr is None else [float(v) for v in self.lag_stderr],
            "plateau_gap": self.plateau_gap,
            "sigma_star2": self.sigma_star2,
            "sigma_star": self.sigma_star if self.sigma_star2 > 0 else None,
            "tail_rate": self.tail_rate,
            "tail_bound": self.tail_bound,
            "tail_fit_ok": self.tail_fit_ok,
        }


def _lag_avgs(count: int, N: int, H: int, sum_x: np.ndarray, raw2: np.ndarray,
              window: int) -> np.ndarray:
    """A_{window,k} for k = 0..H from streaming sums, restricted to j <= window."""
    m = sum_x / count
    bias = count / max(count - 1, 1)
    out = np.empty(H + 1)
    for k in range(H + 1):
        J = window - k
        if J < 1:
            raise UsageError("lag window too short; lower H or raise N")
        cov_j = raw2[k, :J] / count - m[:J] * m[k:k + J]
        out[k] = bias * float(cov_j.mean())
    return out


def _build_report(count: int, N: int, H: int, sum_x: np.ndarray,
                  raw2: np.ndarray, lag_stderr=None) -> CovarianceReport:
    if count < 100:
        raise UsageError("need at least 100 replicas for covariance estimation")
    if H > N // 4:
        raise UsageError("H must not exceed N/4")
    m = sum_x / count
    bias = count / max(count - 1, 1)
    var_j = bias * (raw2[0] / count - m * m)
    q_start = (3 * N) // 4
    sigma2 = float(var_j[q_start:].mean())
    full = _lag_avgs(count, N, H, sum_x, raw2, N)
    half = _lag_avgs(count, N, H, sum_x, raw2, N // 2)
    lags = full[1:]
    plateau_gap = float(np.max(np.abs(full - half))) if H >= 0 else 0.0
    sigma_star2 = sigma2 + 2.0 * float(lags.sum())

    tail_rate, tail_bound, tail_ok = None, 0.0, False
    k_lo = max(H // 2, 1)
    k_range = np.arange(k_lo, H + 1, dtype=float)
    tail_vals = np.abs(full[k_lo:])
    if np.count_nonzero(tail_vals > _LOG_FLOOR) >= 3:
        try:
            fit = fit_decay(tail_vals, x=k_range, kind="exponential", weights="amplitude")
            if fit.rate is not None and fit.rate > 0:
                g = math.exp(-fit.rate)
                amp_H = fit.prefactor * math.exp(-fit.rate * H)
                tail_bound = 2.0 * amp_H * g / (1.0 - g)
                tail_rate, tail_ok = fit.rate, True
        except UsageError:
            pass
    return CovarianceReport(N=N, H=H, count=count, sigma2=sigma2,
                            lag0=float(full[0]), lags=lags, lags_half=half[1:],
                            lag_stderr=lag_stderr, plateau_gap=plateau_gap,
                            sigma_star2=sigma_star2, tail_rate=tail_rate,
                            tail_bound=tail_bound, tail_fit_ok=tail_ok)


def estimate_lag_covariances(X: np.ndarray, H: int, groups: int = 10) -> CovarianceReport:
    """Covariance report from a raw (R, N) replica matrix.

    Lag stderr comes from a contiguous split into `groups` replica groups.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise UsageError("replica matrix must be 2-d")
    R, N = X.shape
    sum_x = X.sum(axis=0)
    raw2 = np.zeros((H + 1, N))
    for k in range(H + 1):
        raw2[k, :N - k] = (X[:, :N - k] * X[:, k:]).sum(axis=0)
    stderr = None
    if groups >= 2 and R >= groups * 10:
        per_group = np.empty((groups, H))
        edges = np.linspace(0, R, groups + 1, dtype=int)
        for g in range(groups):
            sub = X[edges[g]:edges[g + 1]]
            s1 = sub.sum(axis=0)
            r2 = np.zeros((H + 1, N))
            for k in range(H + 1):
                r2[k, :N - k] = (sub[:, :N - k] * sub[:, k:]).sum(axis=0)
            per_group[g] = _lag_avgs(sub.shape[0], N, H, s1, r2, N)[1:]
        stderr = per_group.std(axis=0, ddof=1) / math.sqrt(groups)
    return _build_report(R, N, H, sum_x, raw2, lag_stderr=stderr)


def covariances_from_accumulation(acc: CLTAccumulation) -> CovarianceReport:
    """Covariance report from streamed sums (no group stderr available)."""
    return _build_report(acc.count, acc.N, acc.H, acc.sum_x, acc.raw2)


# --------------------------------------------------------------------------- #
# normality and Lindeberg diagnostics
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class KSReport:
    n: int
    sigma: float
    statistic: float
    threshold: float
    passed: bool

    def to_jsonable(self) -> dict:
        return {"n": self.n, "sigma": self.sigma, "statistic": self.statistic,
                "threshold": self.threshold, "passed": self.passed}


def ks_normality_test(samples, sigma: float, threshold: float | None = None) -> KSReport:
    """One-sample Kolmogorov test of samples against Normal(0, sigma^2).

    The default threshold is 1.5 times the asymptotic 5 percent quantile
    1.36/sqrt(n), loose enough to absorb the sigma estimation error.
    """
    s = np.sort(np.asarray(samples, dtype=float))
    n = s.size
    if n < 10:
        raise UsageError("need at least 10 samples for the KS test")
    if sigma <= 0:
        raise UsageError("sigma must be positive")
    F = ndtr(s / sigma)
    i = np.arange(1, n + 1)
    d_plus = np.max(i / n - F)
    d_minus = np.max(F - (i - 1) / n)
    stat = float(max(d_plus, d_minus))
    thr = float(threshold) if threshold is not None else 1.5 * 1.36 / math.sqrt(n)
    return KSReport(n=n, sigma=float(sigma), statistic=stat, threshold=thr,
                    passed=stat <= thr)


@dataclass(frozen=True)
class LindebergReport:
    """Truncation levels at which the Lindeberg condition holds exactly.

    For a bounded summand |X| <= B the truncated second moment vanishes as
    soon as eps * sqrt(N) * sigma_star exceeds B, which gives a hard step
    count n_star per epsilon rather than an asymptotic statement.
    """

    sup_bound: float
    sigma_star: float
    N: int
    eps: tuple[float, ...]
    cutoff: tuple[float, ...]          # eps * sqrt(N) * sigma_star
    vanishes: tuple[bool, ...]
    n_star: tuple[float, ...]          # minimal N making the term vanish
    observed_max: float | None

    def to_jsonable(self) -> dict:
        return {"sup_bound": self.sup_bound, "sigma_star": self.sigma_star,
                "N": self.N, "eps": list(self.eps), "cutoff": list(self.cutoff),
                "vanishes": list(self.vanishes), "n_star": list(self.n_star),
                "observed_max": self.observed_max}


@dataclass(frozen=True)
class LindebergSums:
    """Monte Carlo Lindeberg sums against the third-moment bound.

    For Y_{N,j} = X_j / sqrt(N), the sum over j of E[Y^2; |Y| > eps] is
    estimated across replicas; the bound is (2||G||_inf)^3 / (eps sqrt(N)).
    """

    N: int
    count: int
    eps: tuple[float, ...]
    values: tuple[float, ...]
    stderrs: tuple[float, ...]
    bounds: tuple[float, ...]

    def to_jsonable(self) -> dict:
        return {"N": self.N, "count": self.count, "eps": list(self.eps),
                "values": list(self.values), "stderrs": list(self.stderrs),
                "bounds": list(self.bounds)}


def lindeberg_sums(X: np.ndarray, sup_bound: float,
                   eps_grid=(0.5, 0.1, 0.05, 0.02)) -> LindebergSums:
    """Empirical Lindeberg sums from a centered (R, N) replica matrix."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise UsageError("need a 2-d replica matrix with at least 2 replicas")
    R, N = X.shape
    Y2 = (X * X) / N
    absY = np.abs(X) / math.sqrt(N)
    vals, errs, bounds = [], [], []
    for eps in eps_grid:
        if eps <= 0:
            raise UsageError("eps grid must be positive")
        per_replica = np.where(absY > eps, Y2, 0.0).sum(axis=1)
        vals.append(float(per_replica.mean()))
        errs.append(float(per_replica.std(ddof=1) / math.sqrt(R)))
        bounds.append((2.0 * sup_bound) ** 3 / (eps * math.sqrt(N)))
    return LindebergSums(N=N, count=R, eps=tuple(float(e) for e in eps_grid),
                         values=tuple(vals), stderrs=tuple(errs),
                         bounds=tuple(bounds))


def lindeberg_diagnostic(N: int, sigma_star: float, sup_bound: float,
                         eps_grid=(0.1, 0.05, 0.02),
                         observed_max: float | None = None) -> LindebergReport:
    if sigma_star <= 0 or sup_bound <= 0:
        raise UsageError("sigma_star and sup_bound must be positive")
    bound = sup_bound
    if observed_max is not None and 0.0 < observed_max < sup_bound:
        bound = observed_max
    cutoffs, vanish, n_star = [], [], []
    for eps in eps_grid:
        cut = eps * math.sqrt(N) * sigma_star
        cutoffs.append(cut)
        vanish.append(cut > bound)
        n_star.append((sup_bound / (eps * sigma_star)) ** 2)
    return LindebergReport(sup_bound=float(sup_bound), sigma_star=float(sigma_star),
                           N=int(N), eps=tuple(float(e) for e in eps_grid),
                           cutoff=tuple(cutoffs), vanishes=tuple(vanish),
                           n_star=tuple(n_star), observed_max=observed_max)


# --------------------------------------------------------------------------- #
# CLT report
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class CLTReport:
    N: int
    count: int
    center: float
    rungs: np.ndarray
    sample_mean: np.ndarray
    sample_var: np.ndarray
    third_moment_ratio: np.ndarray    # E|S_n|^3 / n^(3/2) per rung (= E|X_n_sample|^3)
    third_moment_bound_check: bool    # every ratio below (2||G||_inf)^3
    covariance: CovarianceReport
    degenerate: bool                  # sigma_star^2 vanished; KS skipped
    ks: tuple[KSReport, ...]          # one per rung, against Normal(0, sigma_star^2)
    lindeberg: LindebergReport | None

    def to_jsonable(self) -> dict:
        return {
            "N": self.N, "count": self.count, "center": self.center,
            "rungs": [int(r) for r in self.rungs],
            "sample_mean": [float(v) for v in self.sample_mean],
            "sample_var": [float(v) for v in self.sample_var],
            "third_moment_ratio": [float(v) for v in self.third_moment_ratio],
            "third_moment_bound_check": self.third_moment_bound_check,
            "covariance": self.covariance.to_jsonable(),
            "degenerate": self.degenerate,
            "ks": [k.to_jsonable() for k in self.ks],
            "lindeberg": None if self.lindeberg is None else self.lindeberg.to_jsonable(),
        }


def clt_report(acc: CLTAccumulation, sup_bound: float,
               ks_threshold: float | None = None,
               covariance: CovarianceReport | None = None) -> CLTReport:
    """Assemble the partial-sum normality report for one accumulation run.

    The same sigma_star standardizes every rung; by default it comes from the
    covariance report of this very accumulation.  A vanishing limiting
    variance marks the report degenerate and skips the KS tests.
    """
    cov = covariance if covariance is not None else covariances_from_accumulation(acc)
    third = np.abs(acc.samples) ** 3
    third_ratio = third.mean(axis=0)
    third_ok = bool(np.all(third_ratio <= (2.0 * sup_bound) ** 3))
    degenerate = cov.sigma_star2 <= 1e-14
    if degenerate:
        ks_list: tuple[KSReport, ...] = ()
        lind = None
    else:
        sigma_star = cov.sigma_star
        ks_list = tuple(
            ks_normality_test(acc.samples[:, i], sigma_star, threshold=ks_threshold)
            for i in range(acc.rungs.size)
        )
        lind = lindeberg_diagnostic(acc.N, sigma_star, sup_bound,
                                    observed_max=acc.max_abs_x)
    return CLTReport(N=acc.N, count=acc.count, center=acc.center,
                     rungs=acc.rungs,
                     sample_mean=acc.samples.mean(axis=0),
                     sample_var=acc.samples.var(axis=0, ddof=1),
                     third_moment_ratio=third_ratio,
                     third_moment_bound_check=third_ok,
                     covariance=cov, degenerate=degenerate,
                     ks=ks_list, lindeberg=lind)
