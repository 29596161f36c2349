"""
Tests for the Dirichlet pipeline: reflection, disk homeomorphism, boundary trace and Schwarz reconstruction
"""
import numpy as np
import pytest
from numpy.testing import assert_allclose

from blab.dirichlet import (
    AnalyticPart,
    BoundaryData,
    boundary_trace,
    conjugation_point,
    critical_clusters,
    evaluate_analytic,
    kernel_bound,
    poisson_real_part,
    pull_back,
    reflect_extend,
    schwarz_reconstruct,
    solve_dirichlet,
    solve_disk_homeomorphism,
)
from blab.errors import FieldError, GridError, PreconditionError, StageError, SupportError
from blab.fields import DilatationField, GridSpec, MapField
from tests.conftest import radial_stretch


def zero_dilatation(spec):
    return DilatationField.from_values(spec, np.zeros((spec.resolution, spec.resolution)))


def disk_mobius(z, a):
    return (z - a) / (1.0 - np.conj(a) * z)


@pytest.mark.parametrize("m", [64, 100])
def test_boundary_sample_count(m):
    with pytest.raises(PreconditionError):
        BoundaryData(np.zeros(m))


def test_boundary_data_validation():
    values = np.zeros(128)
    values[5] = np.nan
    with pytest.raises(FieldError):
        BoundaryData(values)
    with pytest.raises(FieldError):
        BoundaryData(np.where(np.arange(128) < 64, 0.0, 1.0), modulus_bound=0.5)


def test_boundary_data_interpolates_periodically():
    phi = BoundaryData.from_function(np.cos, 128)
    assert_allclose(phi.at(phi.theta), phi.values)
    assert phi.at(np.array([2.0 * np.pi]))[0] == pytest.approx(1.0)
    assert phi.oscillation == pytest.approx(2.0)


def test_schwarz_of_cosine():
    F = schwarz_reconstruct(BoundaryData.from_function(lambda t: np.cos(3.0 * t), 256))
    expected = np.zeros(F.coefficients.size, dtype=complex)
    expected[3] = 1.0
    assert_allclose(F.coefficients, expected, atol=1e-12)


def test_schwarz_of_sine():
    """sin(theta) is the real part of -i y on the circle"""
    F = schwarz_reconstruct(BoundaryData.from_function(np.sin, 256))
    assert F.coefficients[1] == pytest.approx(-1j)
    assert F(0.0) == pytest.approx(0.0)


def test_schwarz_matches_poisson_integral():
    phi = BoundaryData.from_function(lambda t: np.exp(np.cos(t)) + 0.3 * np.sin(2.0 * t), 256)
    F = schwarz_reconstruct(phi)
    r, t = np.meshgrid(np.linspace(0.0, 0.9, 10), np.linspace(0.0, 2.0 * np.pi, 17))
    y = r * np.exp(1j * t)
    assert_allclose(evaluate_analytic(F, y).real, poisson_real_part(phi, y), atol=1e-9)


def test_schwarz_mean_value():
    phi = BoundaryData.from_function(lambda t: 2.0 + np.cos(t) ** 2, 128)
    assert schwarz_reconstruct(phi)(0.0).real == pytest.approx(2.5)


def test_analytic_part_rejects_imaginary_constant():
    with pytest.raises(FieldError):
        AnalyticPart([0.5j, 1.0])


def test_evaluation_stays_inside_the_disk():
    F = AnalyticPart([0.0, 1.0])
    with pytest.raises(PreconditionError):
        evaluate_analytic(F, np.array([1.0 + 0j]))
    with pytest.raises(PreconditionError):
        poisson_real_part(BoundaryData(np.ones(128)), np.array([1.0 + 0j]))


def test_kernel_bound():
    assert kernel_bound(0.5) == pytest.approx(3.0)
    assert kernel_bound(0.0) == 1.0
    with pytest.raises(PreconditionError):
        kernel_bound(1.0)


def test_reflection_of_constant_dilatation(disk_grid):
    mu = DilatationField.from_function(disk_grid, lambda z: 0.2 + 0 * z, 0.5)
    extended = reflect_extend(mu)
    assert extended.spec.half_width >= 4.0
    assert extended.spec.spacing == pytest.approx(disk_grid.spacing)
    z = extended.spec.nodes()
    radius = np.abs(z)
    far = (radius > 2.2) & (radius < 3.5)
    assert_allclose(extended.values[far], (0.2 * z ** 2 / np.conj(z) ** 2)[far], atol=1e-12)
    gap = (radius > 1.1) & (radius < 1.8)
    assert np.all(extended.values[gap] == 0)
    assert_allclose(extended.values[radius < 0.45], 0.2)
    assert extended.clearance_cells() >= 2


def test_reflection_needs_support_inside_the_disk(disk_grid):
    mu = DilatationField.from_function(disk_grid, lambda z: 0.2 + 0 * z, 1.0)
    with pytest.raises(SupportError):
        reflect_extend(mu)


def test_disk_homeomorphism_of_zero_dilatation(disk_grid):
    disk = solve_disk_homeomorphism(zero_dilatation(disk_grid), 0j)
    assert_allclose(disk.G.values, disk_grid.nodes(), atol=1e-10)
    assert disk.boundary_deviation <= 1e-10


def test_disk_homeomorphism_is_mobius_for_zero_dilatation(disk_grid):
    disk = solve_disk_homeomorphism(zero_dilatation(disk_grid), 0.5)
    z = disk_grid.nodes()
    inside = np.abs(z) <= 1.0
    assert_allclose(disk.G.values[inside], disk_mobius(z, 0.5)[inside], atol=1e-3)


def test_disk_homeomorphism_of_radial_stretch(disk_grid):
    """Stretch on |z| < 1/2: G = 2 z |z| there and the identity on the annulus"""
    disk = solve_disk_homeomorphism(radial_stretch(disk_grid, 0.5), 0j)
    z = disk_grid.nodes()
    radius = np.abs(z)
    core = radius <= 0.4
    annulus = (radius >= 0.6) & (radius <= 0.95)
    assert_allclose(disk.G.values[core], (2.0 * z * np.abs(z))[core], atol=5e-2)
    assert_allclose(disk.G.values[annulus], z[annulus], atol=5e-2)


def test_disk_homeomorphism_rejects_small_grids():
    spec = GridSpec(0j, 0.9, 32)
    with pytest.raises(GridError):
        solve_disk_homeomorphism(zero_dilatation(spec), 0j)


def test_conjugation_point_of_zero_dilatation(disk_grid):
    assert conjugation_point(zero_dilatation(disk_grid), 3.9) == 0.0
    mu = zero_dilatation(disk_grid)
    assert pull_back(mu, 0.0) is mu


def test_pulled_back_dilatation_reflects_without_truncation(disk_grid):
    mu = DilatationField.from_function(disk_grid, lambda z: 0.3 + 0 * z, 0.5)
    target = disk_grid.grown(4.0)
    reach = target.half_width - 5.0 * disk_grid.spacing
    a = conjugation_point(mu, reach)
    assert 0.5 < a < 1.0
    pulled = pull_back(mu, a)
    assert np.abs(pulled.values).max() <= 0.3 + 1e-12
    z = disk_grid.nodes()
    assert np.all(pulled.values[np.abs(z) < 1.0 / reach] == 0)
    extended = reflect_extend(pulled, target)
    assert extended.support_radius <= reach


def test_conjugation_point_needs_room(disk_grid):
    mu = DilatationField.from_function(disk_grid, lambda z: 0.3 + 0 * z, 0.5)
    with pytest.raises(SupportError):
        conjugation_point(mu, 0.9)


@pytest.mark.parametrize("k", [0.2, 0.5])
def test_disk_homeomorphism_keeps_the_circle_round(k):
    """Constant mu on |z| < 1/2 is not radial; the unit circle must still map onto itself"""
    spec = GridSpec(0j, 1.25, 256)
    mu = DilatationField.from_function(spec, lambda z: k + 0 * z, 0.5)
    disk = solve_disk_homeomorphism(mu, 0j)
    assert disk.conjugation_point > 0.0
    assert disk.boundary_deviation <= 2.0 * spec.spacing
    circle = disk.G.values[np.abs(np.abs(spec.nodes()) - 1.0) < 0.5 * spec.spacing]
    assert_allclose(np.abs(circle), 1.0, atol=4.0 * spec.spacing)


def test_boundary_trace_of_identity(disk_grid):
    correspondence = boundary_trace(MapField.identity(disk_grid), 128)
    assert correspondence.winding == 1
    assert_allclose(correspondence.preimages, np.exp(1j * correspondence.theta), atol=1e-9)


def test_critical_clusters(small_grid):
    assert critical_clusters(MapField.identity(small_grid)) == 0
    reflected = MapField.from_function(small_grid, np.conj)
    assert critical_clusters(reflected) == small_grid.resolution ** 2
    disk = small_grid.disk_mask(0j, 1.0)
    assert critical_clusters(reflected, disk) == int(disk.sum())


def test_dirichlet_with_zero_dilatation(disk_grid):
    """phi = cos(theta) is solved by f(z) = z"""
    solution = solve_dirichlet(zero_dilatation(disk_grid), BoundaryData.from_function(np.cos, 256))
    assert solution.boundary_residual <= 1e-8
    assert abs(solution.im_f_z0) <= 1e-8
    assert solution.max_critical_cluster == 0
    z = disk_grid.nodes()
    inside = np.abs(z) < 1.0
    assert_allclose(solution.f.values[inside], z[inside], atol=1e-8)
    assert np.isnan(solution.f.values[~inside]).all()
    assert solution.correspondence.winding == 1


def test_dirichlet_normalized_off_center(disk_grid):
    solution = solve_dirichlet(zero_dilatation(disk_grid), BoundaryData.from_function(np.cos, 256), z0=0.5)
    assert solution.boundary_residual <= 1e-2
    assert abs(solution.im_f_z0) <= 1e-8
    assert solution.max_interior_modulus < 1.0


def test_dirichlet_with_constant_dilatation(disk_grid):
    mu = DilatationField.from_function(disk_grid, lambda z: 0.2 + 0 * z, 0.5)
    solution = solve_dirichlet(mu, BoundaryData.from_function(lambda t: np.cos(t) + 0.5 * np.sin(2.0 * t), 256))
    assert solution.boundary_residual <= 2e-2
    assert abs(solution.im_f_z0) <= 1e-8
    assert solution.chain_rule_deviation <= 5e-2
    assert solution.max_interior_modulus < 1.0
    data = solution.to_dict()
    assert data["solver"]["converged"]


def test_dirichlet_with_radial_stretch():
    spec = GridSpec(0j, 1.25, 256)
    solution = solve_dirichlet(radial_stretch(spec, 0.5), BoundaryData.from_function(np.cos, 512))
    assert solution.boundary_residual <= 1e-2
    assert abs(solution.im_f_z0) <= 1e-8
    assert solution.chain_rule_deviation <= 5e-2
    assert solution.max_critical_cluster == 0
    # G is the identity on the annulus, so f = z there
    z = spec.nodes()
    annulus = (np.abs(z) >= 0.6) & (np.abs(z) <= 0.95)
    assert_allclose(solution.f.values[annulus], z[annulus], atol=5e-2)


def test_dirichlet_with_constant_data(disk_grid):
    solution = solve_dirichlet(zero_dilatation(disk_grid), BoundaryData(np.full(128, 0.7)))
    assert solution.G is None
    inside = np.abs(disk_grid.nodes()) < 1.0
    assert np.all(solution.f.values[inside] == 0.7)
    assert solution.boundary_residual == 0.0


def test_dirichlet_stage_errors(disk_grid):
    phi = BoundaryData.from_function(np.cos, 128)
    strong = DilatationField.from_function(disk_grid, lambda z: 0.98 + 0 * z, 0.5)
    with pytest.raises(StageError) as excinfo:
        solve_dirichlet(strong, phi)
    assert excinfo.value.stage == "disk-homeomorphism"
    assert excinfo.value.exit_code == 2
    with pytest.raises(StageError):
        solve_dirichlet(zero_dilatation(disk_grid), phi, z0=0.999)
