import numpy as np
import pytest
from scipy.special import ndtr
from scipy.stats import chi2

from twistens.errors import DomainError, UnsupportedError, UsageError
from twistens.phase import TWO_PI, action_angle_to_canonical
from twistens.sampling import (STREAM_INIT, STREAM_SCRATCH, CustomDensity,
                               GaussianPhaseSpace, SeedPlan, UniformBandCosine,
                               density_mass, density_value,
                               gauss_legendre_nodes, rho_fourier_coeff,
                               sample_initial)

CHI2_ALPHA = 1e-3


def chi2_gate(counts, expected):
    """Chi-square statistic with merging of sparse cells, returns p-value."""
    counts = np.asarray(counts, dtype=float).ravel()
    expected = np.asarray(expected, dtype=float).ravel()
    keep = expected >= 10
    stat = float((((counts - expected) ** 2)[keep] / expected[keep]).sum())
    cells = int(keep.sum())
    rest = float(expected[~keep].sum())
    if rest > 0:
        stat += (counts[~keep].sum() - rest) ** 2 / rest
        cells += 1
    return float(chi2.sf(stat, cells - 1))


def test_seed_plan_substreams_are_stable_and_distinct(plan):
    a = plan.substream(STREAM_SCRATCH, 3).standard_normal(8)
    b = plan.substream(STREAM_SCRATCH, 3).standard_normal(8)
    c = plan.substream(STREAM_SCRATCH, 4).standard_normal(8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    with pytest.raises(UsageError):
        SeedPlan(master_seed=-1)


def test_gaussian_density_normalization(cloud):
    assert density_mass(cloud, I_max=2.0, n_nodes=400) == pytest.approx(1.0, abs=1e-6)


def test_band_density_normalization(band):
    # single-panel Gauss-Legendre stalls at the jump in rho at the band edges
    assert density_mass(band, I_max=2.0, n_nodes=4000) == pytest.approx(1.0, abs=5e-4)
    # quadrature confined to the band itself sees a smooth integrand
    x, w = np.polynomial.legendre.leggauss(200)
    half = 0.5 * (band.I_hi - band.I_lo)
    nodes = band.I_lo + half * (x + 1.0)
    rho0 = rho_fourier_coeff(band, 0, nodes, quadrature_points=256)
    mass = TWO_PI * float(np.dot(half * w, np.real(rho0)))
    assert mass == pytest.approx(1.0, abs=1e-10)


def test_gaussian_bessel_coefficients_vs_quadrature(cloud):
    nodes = np.array([0.003, 0.01, 0.05, 0.3, 0.9, 1.7])
    for k in range(-4, 5):
        exact = cloud.fourier_coeff_exact(k, nodes)
        quad = rho_fourier_coeff(cloud, k, nodes, quadrature_points=4096)
        assert np.max(np.abs(exact - quad)) < 1e-8


def test_gaussian_bessel_coefficients_offset_center():
    rho = GaussianPhaseSpace(q0=0.6, p0=-0.8, eps0=0.02)
    nodes = np.array([0.05, 0.4, 1.1])
    for k in (-3, -1, 0, 2):
        exact = rho.fourier_coeff_exact(k, nodes)
        quad = rho_fourier_coeff(rho, k, nodes, quadrature_points=4096)
        assert np.max(np.abs(exact - quad)) < 1e-8


def test_gaussian_coefficients_tiny_eps_stable():
    # raw Bessel I_k overflows here; the scaled form must not
    rho = GaussianPhaseSpace(q0=1.0, p0=0.0, eps0=1e-4)
    vals = rho.fourier_coeff_exact(2, np.array([0.5, 0.50005, 0.7]))
    assert np.all(np.isfinite(vals))
    assert abs(vals[0]) > 1.0  # sharp peak at I = q0^2/2


def test_band_coefficients_exact_three_modes(band):
    I = np.array([0.5, 1.0])
    norm = 2 * np.pi * (band.I_hi - band.I_lo)
    assert np.allclose(band.fourier_coeff_exact(0, I), 1.0 / norm)
    assert np.allclose(band.fourier_coeff_exact(1, I), 0.4 / norm)
    assert np.allclose(band.fourier_coeff_exact(-1, I), 0.4 / norm)
    assert np.allclose(band.fourier_coeff_exact(2, I), 0.0)
    assert np.allclose(rho_fourier_coeff(band, 1, I), 0.4 / norm, atol=1e-12)
    assert band.fourier_coeff_exact(0, np.array([0.1]))[0] == 0.0  # off band


def test_conjugate_symmetry_of_coefficients(cloud):
    I = np.array([0.2, 0.8])
    for k in (1, 2, 5):
        assert np.allclose(cloud.fourier_coeff_exact(-k, I),
                           np.conj(cloud.fourier_coeff_exact(k, I)))


def test_gaussian_sampler_chi2_in_canonical_plane(cloud, plan):
    n = 10 ** 6
    I, th = cloud.sample(n, plan.substream(STREAM_SCRATCH, 0))
    q, p = action_angle_to_canonical(I, th)
    sig = np.sqrt(cloud.eps0)
    edges = np.linspace(-5 * sig, 5 * sig, 65)
    cdf = ndtr(edges / sig)
    pfull = np.concatenate([[cdf[0]], np.diff(cdf), [1 - cdf[-1]]])
    P = np.outer(pfull, pfull) * n
    qi = np.searchsorted(edges, q - cloud.q0, side="right")
    pi = np.searchsorted(edges, p - cloud.p0, side="right")
    counts = np.zeros((66, 66))
    np.add.at(counts, (qi, pi), 1)
    assert chi2_gate(counts, P) >= CHI2_ALPHA


def test_band_sampler_chi2(band, plan):
    n = 10 ** 6
    I, th = band.sample(n, plan.substream(STREAM_SCRATCH, 1))
    assert np.all((I >= band.I_lo) & (I <= band.I_hi))
    Ie = np.linspace(band.I_lo, band.I_hi, 65)
    te = np.linspace(0.0, 2 * np.pi, 65)
    pI = np.diff(Ie) / (band.I_hi - band.I_lo)
    pth = (np.diff(te) + band.coupling * np.diff(np.sin(te))) / (2 * np.pi)
    expected = np.outer(pI, pth) * n
    counts, _, _ = np.histogram2d(I, th, bins=[Ie, te])
    assert counts.sum() == n
    assert chi2_gate(counts, expected) >= CHI2_ALPHA


def test_gaussian_mean_action_matches_samples(cloud, plan):
    I, _ = cloud.sample(200000, plan.substream(STREAM_SCRATCH, 2))
    assert I.mean() == pytest.approx(cloud.mean_action(), rel=0.01)


def test_sample_initial_chunking_is_invisible(cloud, plan):
    I1, t1 = sample_initial(cloud, 5000, plan, chunk=512)
    I2, t2 = sample_initial(cloud, 5000, plan, chunk=512)
    assert np.array_equal(I1, I2) and np.array_equal(t1, t2)
    # the first chunk's draws equal a direct substream draw
    I3, t3 = cloud.sample(512, plan.substream(STREAM_INIT, 0))
    assert np.array_equal(I1[:512], I3) and np.array_equal(t1[:512], t3)


def test_custom_density_paths():
    rho = CustomDensity(pdf=lambda I, th: np.exp(-I) / (2 * np.pi))
    assert density_value(rho, 0.0, 0.3) == pytest.approx(1 / (2 * np.pi))
    assert density_mass(rho, I_max=40.0, n_nodes=400) == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(UnsupportedError):
        rho.sample(5, np.random.default_rng(0))


def test_quadrature_guards():
    with pytest.raises(UsageError):
        rho_fourier_coeff(GaussianPhaseSpace(q0=1.0), 40, 0.5, quadrature_points=64)
    with pytest.raises(DomainError):
        gauss_legendre_nodes(-1.0, 10)
    nodes, weights = gauss_legendre_nodes(2.0, 50)
    assert weights.sum() == pytest.approx(2.0)
    assert np.all((nodes > 0) & (nodes < 2.0))
