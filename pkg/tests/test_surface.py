import numpy as np
import pytest
import sympy as sp
from hypothesis import given, strategies as st
from scipy import integrate

from pmcf.ambient import AmbientMetric, metric_tensor
from pmcf.errors import DomainError, GraphConditionError
from pmcf.sphere import SphericalGrid
from pmcf.surface import (
    RadialGraph,
    area,
    enclosed_volume,
    geometry,
    isoperimetric_ratio,
    make_sphere,
    perturb,
    read_snapshot,
    sphere_area,
    sphere_of_area,
    sphere_of_volume,
    sphere_principal_curvature,
    variation_check,
    write_snapshot,
)


def schwarzschild_shell_volume(m, r):
    """4 pi int_{r_h}^{r} (1 + m/2s)^6 s^2 ds, exact rational antiderivative."""
    s = sp.symbols("s", positive=True)
    rh = sp.Rational(m) / 2 if m else 0
    expr = 4 * sp.pi * sp.integrate(sp.expand((1 + sp.Rational(m) / (2 * s)) ** 6 * s**2), (s, rh, sp.nsimplify(r)))
    return float(expr)


@pytest.mark.parametrize("m,r0", [(0.0, 1.0), (2.0, 2.0), (2.0, 3.0), (1.0, 0.7), (4.0, 10.0)])
def test_coordinate_sphere_geometry(grid24, m, r0):
    g = geometry(make_sphere(grid24, AmbientMetric(m=m), r0))
    k = sphere_principal_curvature(m, r0)
    np.testing.assert_allclose(g.kappa1, k, rtol=1e-11)
    np.testing.assert_allclose(g.kappa2, k, rtol=1e-11)
    np.testing.assert_allclose(g.H, 2 * k, rtol=1e-11)
    assert np.max(g.ring2) < 1e-20
    assert g.area == pytest.approx(sphere_area(m, r0), rel=1e-13)


def test_sphere_closed_forms():
    assert sphere_principal_curvature(2.0, 2.0) == pytest.approx(0.0740741, abs=1e-7)
    assert sphere_area(2.0, 2.0) == pytest.approx(81 * np.pi, rel=1e-15)
    # the horizon is minimal
    assert sphere_principal_curvature(2.0, 1.0) == 0.0


def test_graph_factor_on_round_sphere(grid16):
    g = geometry(make_sphere(grid16, AmbientMetric(m=2.0), 2.0))
    np.testing.assert_allclose(g.chi, 2.25, rtol=1e-14)


def test_translated_euclidean_sphere():
    # unit sphere centred at c, written over the origin
    grid = SphericalGrid(40)
    c = np.array([0.05, -0.08, 0.1])
    cw = grid.omega @ c
    rho = cw + np.sqrt(1 - c @ c + cw**2)
    g = geometry(RadialGraph(grid, rho, AmbientMetric()))
    np.testing.assert_allclose(g.H, 2.0, atol=1e-9)
    assert np.sqrt(np.max(g.ring2)) < 1e-9
    assert g.area == pytest.approx(4 * np.pi, rel=1e-12)
    assert enclosed_volume(RadialGraph(grid, rho, AmbientMetric())) == pytest.approx(4 * np.pi / 3, rel=1e-12)


@pytest.mark.parametrize("m,r0", [(2.0, 2.0), (2.0, 3.0), (0.5, 1.5), (0.0, 1.0)])
def test_sphere_volume_closed_form(grid16, m, r0):
    vol = enclosed_volume(make_sphere(grid16, AmbientMetric(m=m), r0))
    assert vol == pytest.approx(schwarzschild_shell_volume(m, r0), rel=1e-12)


def test_graph_volume_against_exact_radial_integral(grid24, schwarzschild):
    graph = perturb(make_sphere(grid24, schwarzschild, 3.0), (3, 1), 0.1)
    s = sp.symbols("s", positive=True)
    anti = sp.lambdify(s, sp.integrate(sp.expand((1 + 1 / s) ** 6 * s**2), s), "numpy")
    expected = grid24.integrate(anti(graph.rho) - anti(1.0))
    assert enclosed_volume(graph) == pytest.approx(expected, rel=1e-12)


def test_perturbed_metric_volume_against_quad(perturbed):
    grid = SphericalGrid(6)
    graph = perturb(make_sphere(grid, perturbed, 2.5), (2, 0), 0.1)

    def radial(j, i):
        w = grid.omega[j, i]

        def f(s):
            return np.sqrt(np.linalg.det(metric_tensor(perturbed, s * w))) * s * s

        pieces = [1.0, 2.0, graph.rho[j, i]]
        return sum(integrate.quad(f, a, b, epsabs=0, epsrel=1e-13, limit=200)[0] for a, b in zip(pieces, pieces[1:]))

    inner = np.array([[radial(j, i) for i in range(grid.shape[1])] for j in range(grid.shape[0])])
    assert enclosed_volume(graph) == pytest.approx(grid.integrate(inner), rel=1e-11)


def test_isoperimetric_ratio(grid24, schwarzschild):
    assert isoperimetric_ratio(make_sphere(grid24, AmbientMetric(), 1.0)) == pytest.approx(36 * np.pi, rel=1e-13)
    graph = perturb(make_sphere(grid24, schwarzschild, 3.0), (2, 0), 0.05)
    r = sphere_of_volume(schwarzschild, enclosed_volume(graph))
    floor = isoperimetric_ratio(make_sphere(grid24, schwarzschild, r))
    assert isoperimetric_ratio(graph) > floor


@given(st.floats(1.01, 20.0))
def test_sphere_inversions_roundtrip(r):
    metric = AmbientMetric(m=2.0)
    grid = SphericalGrid(8)
    sphere = make_sphere(grid, metric, r)
    assert sphere_of_volume(metric, enclosed_volume(sphere)) == pytest.approx(r, rel=1e-11)
    assert sphere_of_area(metric, area(sphere)) == pytest.approx(r, rel=1e-11)


def test_sphere_of_area_exact():
    assert sphere_of_area(AmbientMetric(m=2.0), 81 * np.pi) == pytest.approx(2.0, rel=1e-13)


def test_sphere_inversion_domain():
    metric = AmbientMetric(m=2.0)
    with pytest.raises(DomainError):
        sphere_of_volume(metric, -1.0)
    with pytest.raises(DomainError):
        sphere_of_area(metric, 16 * np.pi * 0.99)


@pytest.mark.parametrize("which", ["flat", "schwarzschild", "perturbed"])
@given(st.integers(0, 2**31 - 1))
def test_first_variation(request, which, seed):
    metric = request.getfixturevalue(which)
    rng = np.random.default_rng(seed)
    grid = SphericalGrid(16)
    graph = make_sphere(grid, metric, 3.0)
    for l in (2, 3):
        graph = perturb(graph, (l, int(rng.integers(-l, l + 1))), rng.uniform(-0.05, 0.05))
    psi = grid.truncate(rng.standard_normal(grid.shape), 6)
    lhs, rhs = variation_check(graph, psi)
    assert lhs == pytest.approx(rhs, rel=1e-6)


def test_area_is_rotation_invariant(grid24, schwarzschild):
    graph = perturb(perturb(make_sphere(grid24, schwarzschild, 3.0), (3, 2), 0.05), (4, -1), 0.03)
    shifted = graph.with_rho(np.roll(graph.rho, 5, axis=1))
    g0, g1 = geometry(graph), geometry(shifted)
    np.testing.assert_allclose(np.roll(g0.H, 5, axis=1), g1.H, atol=1e-12)
    assert g0.area == pytest.approx(g1.area, rel=1e-13)


def test_below_horizon_names_node(grid16, schwarzschild):
    with pytest.raises(DomainError, match=r"node \d+ \(theta="):
        perturb(make_sphere(grid16, schwarzschild, 1.2), (2, 0), -0.5)
    with pytest.raises(DomainError, match="horizon"):
        make_sphere(grid16, schwarzschild, 0.9)


def test_graph_condition_failure(grid24, flat):
    # radial slope |grad log rho| of order 60 near the troughs
    graph = RadialGraph(grid24, np.exp(5 * grid24.real_harmonic(12, 6, "max")), flat)
    with pytest.raises(GraphConditionError) as info:
        geometry(graph)
    err = info.value
    assert err.chi <= 1e-3 and err.node is not None and 0 <= err.theta <= np.pi
    assert f"node {err.node}" in str(err)


def test_perturb_rejects_unresolved_degree(grid16, flat):
    with pytest.raises(DomainError):
        perturb(make_sphere(grid16, flat, 1.0), (17, 0), 0.1)


def test_snapshot_roundtrip(tmp_path, grid16, schwarzschild):
    graph = perturb(make_sphere(grid16, schwarzschild, 3.0), (2, 1), 0.07)
    path = tmp_path / "snap.csv"
    write_snapshot(graph, path)
    back = read_snapshot(path, schwarzschild)
    assert back.grid.L == 16
    np.testing.assert_array_equal(back.rho, graph.rho)
    assert path.read_text().splitlines()[0] == "theta,phi,rho"
