import numpy as np
import pytest
from hypothesis import given, strategies as st

from pmcf.sphere import SphericalGrid, gauss_legendre, real_harmonic, real_harmonic_max


def random_bandlimited(grid, lmax, seed):
    rng = np.random.default_rng(seed)
    f = np.zeros(grid.shape)
    for l in range(lmax + 1):
        for m in range(-l, l + 1):
            f += rng.standard_normal() * grid.real_harmonic(l, m)
    return f


def test_gauss_legendre_nodes():
    x, w = gauss_legendre(25)
    assert np.sum(w) == pytest.approx(2.0, abs=1e-15)
    np.testing.assert_array_equal(x, -x[::-1])
    np.testing.assert_array_equal(w, w[::-1])
    # exact for polynomials of degree 2n-1
    assert np.sum(w * x**48) == pytest.approx(2 / 49, rel=1e-13)


@pytest.mark.parametrize("L", [4, 16, 24])
def test_quadrature_weights(L):
    g = SphericalGrid(L)
    assert g.integrate(np.ones(g.shape)) == pytest.approx(4 * np.pi, rel=1e-15)
    assert g.shape == (L + 1, 2 * L + 2)


def test_real_harmonics_orthonormal(grid16):
    modes = [(l, m) for l in range(6) for m in range(-l, l + 1)]
    Y = np.array([grid16.real_harmonic(l, m).ravel() for l, m in modes])
    G = (Y * grid16.weights.ravel()) @ Y.T
    np.testing.assert_allclose(G, np.eye(len(modes)), atol=1e-13)


@given(st.integers(0, 2**31 - 1))
def test_transform_roundtrip(seed):
    g = SphericalGrid(12)
    f = random_bandlimited(g, 12, seed)
    np.testing.assert_allclose(g.synthesize(g.analyze(f)), f, atol=1e-12)


@given(st.integers(0, 2**31 - 1), st.integers(0, 10))
def test_truncate_projects(seed, lmax):
    g = SphericalGrid(10)
    f = random_bandlimited(g, 10, seed)
    t = g.truncate(f, lmax)
    np.testing.assert_allclose(g.truncate(t, lmax), t, atol=1e-12)
    spec = g.degree_spectrum(t)
    assert np.all(spec[lmax + 1:] < 1e-24)
    np.testing.assert_allclose(t, random_bandlimited(g, lmax, seed), atol=1e-12)


def test_derivatives_of_known_function(grid24):
    g = grid24
    T, P = g.TH, g.PH
    f = np.sin(T) ** 2 * np.cos(T) * np.cos(P) * np.sin(P)
    f_t, f_p, f_tt, f_tp, f_pp = g.derivatives(f)
    c2 = np.cos(P) * np.sin(P)
    np.testing.assert_allclose(f_t, (2 * np.sin(T) * np.cos(T) ** 2 - np.sin(T) ** 3) * c2, atol=1e-12)
    np.testing.assert_allclose(f_p, np.sin(T) ** 2 * np.cos(T) * np.cos(2 * P), atol=1e-12)
    np.testing.assert_allclose(f_tp, (2 * np.sin(T) * np.cos(T) ** 2 - np.sin(T) ** 3) * np.cos(2 * P), atol=1e-12)
    np.testing.assert_allclose(f_pp, -4 * f, atol=1e-12)
    d2 = (2 * np.cos(T) ** 3 - 4 * np.sin(T) ** 2 * np.cos(T) - 3 * np.sin(T) ** 2 * np.cos(T)) * c2
    np.testing.assert_allclose(f_tt, d2, atol=1e-11)


@pytest.mark.parametrize("l,m", [(0, 0), (1, 1), (3, -2), (5, 0), (8, 7), (12, -12)])
def test_spherical_laplacian_eigenfunctions(grid24, l, m):
    g = grid24
    Y = g.real_harmonic(l, m)
    Y_t, Y_p, Y_tt, _, Y_pp = g.derivatives(Y)
    lap = Y_tt + Y_t / np.tan(g.TH) + Y_pp / np.sin(g.TH) ** 2
    np.testing.assert_allclose(lap, -l * (l + 1) * Y, atol=1e-10 * max(1, l * l))


def test_harmonic_derivs_agree_with_transform(grid16):
    Y, Y_t, Y_p = grid16.real_harmonic_derivs(4, -3)
    d = grid16.derivatives(Y, order=1)
    np.testing.assert_allclose(Y, grid16.real_harmonic(4, -3), atol=1e-15)
    np.testing.assert_allclose(Y_t, d[0], atol=1e-12)
    np.testing.assert_allclose(Y_p, d[1], atol=1e-12)


def test_harmonic_max_normalisation():
    assert real_harmonic_max(2, 0) == pytest.approx(np.sqrt(5 / (4 * np.pi)), rel=1e-12)
    th = np.linspace(0, np.pi, 801)[:, None]
    ph = np.linspace(0, 2 * np.pi, 801)[None, :]
    for l, m in [(2, 0), (3, 1), (4, -2)]:
        y = real_harmonic(l, m, th, ph, normalization="max")
        assert np.max(np.abs(y)) == pytest.approx(1.0, abs=1e-5)
        assert np.max(np.abs(y)) <= 1 + 1e-12


@given(st.integers(0, 2**31 - 1))
def test_evaluate_and_resample(seed):
    g = SphericalGrid(8)
    f = random_bandlimited(g, 8, seed)
    a = g.analyze(f)
    rng = np.random.default_rng(seed)
    th, ph = rng.uniform(0, np.pi, 5), rng.uniform(0, 2 * np.pi, 5)
    expected = sum(
        rng2 * real_harmonic(l, m, th, ph)
        for (l, m), rng2 in _coefficients(8, seed)
    )
    np.testing.assert_allclose(g.evaluate(a, th, ph), expected, atol=1e-11)
    fine = SphericalGrid(13)
    up = g.resample(f, fine)
    np.testing.assert_allclose(fine.resample(up, g), f, atol=1e-12)
    assert fine.integrate(up) == pytest.approx(g.integrate(f), abs=1e-12)


def _coefficients(lmax, seed):
    rng = np.random.default_rng(seed)
    return [((l, m), rng.standard_normal()) for l in range(lmax + 1) for m in range(-l, l + 1)]


def test_invalid_harmonic():
    with pytest.raises(ValueError):
        real_harmonic(2, 3, 0.1, 0.2)
    with pytest.raises(ValueError):
        SphericalGrid(4).real_harmonic_derivs(5, 0)
