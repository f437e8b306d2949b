import numpy as np
import pytest

from pmcf.ambient import AmbientMetric
from pmcf.diagnostics import RateFit, fit_rate
from pmcf.errors import DomainError, PreconditionError
from pmcf.flow import FlowConfig, run
from pmcf.sphere import SphericalGrid
from pmcf.stability import assemble, axisymmetric_even, compare_rates, spectrum, write_spectrum
from pmcf.surface import geometry, make_sphere, perturb, sphere_principal_curvature


def sphere_eigenvalue(m, r0, l):
    """Degree-l eigenvalue of the full operator on a coordinate sphere (l >= 1)."""
    R = (1 + m / (2 * r0)) ** 2 * r0
    k = sphere_principal_curvature(m, r0)
    return -l * (l + 1) / R**2 + 2 * k**2 - 2 * m / R**3


def block_values(report, l):
    return report.eigenvalues[report.degree_hints == l]


@pytest.fixture(scope="module")
def unit_op():
    return assemble(make_sphere(SphericalGrid(12), AmbientMetric(), 1.0), 8)


@pytest.fixture(scope="module")
def schw_op():
    return assemble(make_sphere(SphericalGrid(24), AmbientMetric(m=2.0), 3.0), 10)


def test_euclidean_blocks(unit_op):
    rep = spectrum(unit_op, "none")
    for l in range(1, 7):
        vals = block_values(rep, l)
        assert len(vals) == 2 * l + 1
        np.testing.assert_allclose(vals, -l * (l + 1) + 2, atol=1e-8)
    assert block_values(rep, 2) == pytest.approx(-4.0, abs=1e-10)
    assert rep.l0_eigenvalue == pytest.approx(4.0, abs=1e-10)
    np.testing.assert_allclose(block_values(rep, 0), 4.0, atol=1e-10)


def test_euclidean_volume_constraint_is_neutral(unit_op):
    rep = spectrum(unit_op, "volume")
    assert rep.predicted_rate == pytest.approx(0.0, abs=1e-10)
    assert len(rep.eigenvalues) == unit_op.size - 1
    assert 0 not in rep.degree_hints


@pytest.mark.parametrize("R", [0.5, 2.0])
def test_euclidean_radius_scaling(R):
    rep = spectrum(assemble(make_sphere(SphericalGrid(10), AmbientMetric(), R), 6), "volume")
    for l in range(1, 7):
        np.testing.assert_allclose(block_values(rep, l), (-l * (l + 1) + 2) / R**2, rtol=1e-10, atol=1e-12)


def test_schwarzschild_blocks(schw_op):
    rep = spectrum(schw_op, "volume")
    for l in range(1, 8):
        np.testing.assert_allclose(block_values(rep, l), sphere_eigenvalue(2.0, 3.0, l), rtol=1e-10)
    assert np.all(rep.eigenvalues < 0)
    # translations are no longer neutral: l = 1 decays
    assert rep.predicted_rate == pytest.approx(-sphere_eigenvalue(2.0, 3.0, 1), rel=1e-10)


def test_block_structure_and_symmetry(schw_op):
    assert schw_op.block_leakage() < 1e-8
    assert schw_op.asymmetry < 1e-10
    np.testing.assert_array_equal(schw_op.stiffness, schw_op.stiffness.T)


def test_axisymmetric_subspace(schw_op):
    rep = spectrum(schw_op, "volume", select=axisymmetric_even)
    assert set(rep.degree_hints) <= {2, 4, 6, 8, 10}
    assert rep.predicted_rate == pytest.approx(-sphere_eigenvalue(2.0, 3.0, 2), rel=1e-10)


def test_area_constraint_matches_volume_on_spheres(schw_op):
    a = spectrum(schw_op, "area").eigenvalues
    v = spectrum(schw_op, "volume").eigenvalues
    np.testing.assert_allclose(a, v, atol=1e-12)


def test_resolution_refinement():
    sphere = make_sphere(SphericalGrid(24), AmbientMetric(m=2.0), 3.0)
    lo = spectrum(assemble(sphere, 8), "volume").eigenvalues[-5:]
    hi = spectrum(assemble(sphere, 16), "volume").eigenvalues[-5:]
    np.testing.assert_allclose(hi, lo, rtol=1e-6)


def test_variants_differ_by_local_curvature_term():
    sphere = make_sphere(SphericalGrid(16), AmbientMetric(m=2.0), 3.0)
    full = spectrum(assemble(sphere, 6, variant="full"), "volume")
    reduced = spectrum(assemble(sphere, 6, variant="reduced"), "volume")
    A2 = 2 * sphere_principal_curvature(2.0, 3.0) ** 2
    np.testing.assert_allclose(reduced.eigenvalues, full.eigenvalues - A2, rtol=1e-10)
    assert reduced.variant == "reduced"


def test_preconditions(grid24, schwarzschild):
    wobbly = perturb(make_sphere(grid24, schwarzschild, 3.0), (2, 0), 1e-3)
    with pytest.raises(PreconditionError, match="umbilic"):
        assemble(wobbly, 6)
    with pytest.raises(PreconditionError, match="CMC"):
        assemble(wobbly, 6, umbilic_tol=None)
    op = assemble(wobbly, 6, umbilic_tol=None, cmc_tol=None)
    assert op.size == 49
    with pytest.raises(ValueError):
        assemble(make_sphere(grid24, schwarzschild, 3.0), 4, variant="other")


def test_compare_rates(schw_op):
    rep = spectrum(schw_op, "volume")
    same = RateFit(rep.predicted_rate, 1.0, (0.0, 1.0))
    assert compare_rates(rep, same) == 0.0
    assert compare_rates(rep, RateFit(1.1 * rep.predicted_rate, 0.999, (0, 1))) == pytest.approx(0.1)
    with pytest.raises(PreconditionError):
        compare_rates(rep, RateFit(rep.predicted_rate, 0.9, (0, 1)))
    neutral = spectrum(assemble(make_sphere(SphericalGrid(8), AmbientMetric(), 1.0), 4), "volume")
    with pytest.raises(DomainError):
        compare_rates(neutral, same)


def test_spectrum_csv(tmp_path, schw_op):
    rep = spectrum(schw_op, "volume")
    path = tmp_path / "spectrum.csv"
    write_spectrum(rep, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "index,degree_hint,eigenvalue"
    assert len(lines) == len(rep.eigenvalues) + 1
    assert lines[-1].split(",")[1] == "1"


def test_euclidean_y20_decay_rate():
    grid = SphericalGrid(12)
    init = perturb(make_sphere(grid, AmbientMetric(), 1.0), (2, 0), 1e-3)
    res = run(init, FlowConfig(t_max=10.0))
    assert res.converged
    fit = fit_rate(res.rows, window=(0.4 * res.state.t, res.state.t))
    rep = spectrum(assemble(make_sphere(grid, AmbientMetric(), 1.0), 8), "volume", select=axisymmetric_even)
    assert rep.predicted_rate == pytest.approx(4.0, rel=1e-10)
    assert compare_rates(rep, fit) <= 0.05


@pytest.mark.slow
def test_nonlinear_rate_matches_linear_prediction():
    metric = AmbientMetric(m=2.0)
    grid = SphericalGrid(16)
    res = run(perturb(make_sphere(grid, metric, 3.0), (2, 0), 1e-3), FlowConfig(dt=0.1, t_max=200.0))
    assert res.converged
    fit = fit_rate(res.rows, window=(0.5 * res.state.t, res.state.t))
    rep = spectrum(assemble(make_sphere(grid, metric, 3.0), 8), "volume", select=axisymmetric_even)
    assert compare_rates(rep, fit, min_r2=0.999) <= 0.02
