"""
Tests for grids, fields, Wirtinger calculus and chordal geometry
"""
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from blab.errors import DegenerateDilatationError, FieldError, GridError, PreconditionError, SupportError
from blab.fields import (
    ComplexField,
    DilatationField,
    ExtendedPoint,
    GridSpec,
    MapField,
    RealField,
    chordal_diameter,
    chordal_distance,
    complex_dilatation,
    jacobian,
    max_dilatation,
    sample_field,
    support_radius,
    wirtinger_derivatives,
)


@pytest.mark.parametrize("resolution", [8, 15, 33])
def test_grid_rejects_bad_resolution(resolution):
    """Resolution must be even and at least 16"""
    with pytest.raises(GridError):
        GridSpec(0j, 1.0, resolution)


def test_grid_rejects_nonpositive_half_width():
    with pytest.raises(GridError):
        GridSpec(0j, 0.0, 32)


def test_grid_nodes_are_cell_centered():
    """Row index follows y, column index follows x"""
    spec = GridSpec(0j, 1.0, 16)
    nodes = spec.nodes()
    assert spec.spacing == 0.125
    assert nodes[0, 0] == complex(-0.9375, -0.9375)
    assert nodes[0, 1].real > nodes[0, 0].real
    assert nodes[1, 0].imag > nodes[0, 0].imag
    assert not np.any(nodes == 0)


def test_grown_grid_keeps_nodes_aligned():
    spec = GridSpec(0j, 1.0, 32)
    grown = spec.grown(3.0)
    assert grown.spacing == pytest.approx(spec.spacing)
    assert grown.half_width >= 3.0
    offset = (grown.resolution - spec.resolution) // 2
    assert_allclose(grown.nodes()[offset:offset + 32, offset:offset + 32], spec.nodes(), atol=1e-12)


def test_fractional_index_of_nodes():
    spec = GridSpec(0.5 + 0.25j, 1.0, 16)
    row, col = spec.fractional_index(spec.nodes()[3, 7])
    assert row == pytest.approx(3.0)
    assert col == pytest.approx(7.0)


def test_field_rejects_infinite_and_mismatched_samples():
    spec = GridSpec(0j, 1.0, 16)
    with pytest.raises(FieldError):
        ComplexField(spec, np.full((16, 16), np.inf))
    with pytest.raises(FieldError):
        ComplexField(spec, np.zeros(10))


def test_field_values_are_read_only():
    field = ComplexField.zeros(GridSpec(0j, 1.0, 16))
    with pytest.raises(ValueError):
        field.values[0, 0] = 1.0


def test_nan_marks_missing_nodes():
    spec = GridSpec(0j, 1.0, 16)
    values = np.zeros((16, 16), dtype=complex)
    values[2, 3] = np.nan
    field = ComplexField(spec, values)
    assert field.missing.sum() == 1


def test_dilatation_bounds_are_enforced():
    spec = GridSpec(0j, 2.0, 32)
    with pytest.raises(DegenerateDilatationError):
        DilatationField.from_function(spec, lambda z: np.ones_like(z), 1.0)
    with pytest.raises(SupportError):
        DilatationField(ComplexField(spec, np.full((32, 32), 0.1)), 1.0)


def test_dilatation_from_function_vanishes_outside_radius():
    spec = GridSpec(0j, 2.0, 64)
    mu = DilatationField.from_function(spec, lambda z: 0.4 + 0 * z, 0.5)
    outside = np.abs(spec.nodes()) > 0.5
    assert np.all(mu.values[outside] == 0)
    assert mu.k_max == pytest.approx(0.4)
    assert mu.clearance_cells() >= 2


def test_support_radius_of_zero_field_is_one_cell():
    spec = GridSpec(0j, 1.0, 16)
    assert support_radius(np.zeros((16, 16)), spec) == spec.spacing


def test_complex_dilatation_of_affine_map():
    """f = z + k conj(z) has mu = k exactly under central differences"""
    spec = GridSpec(0j, 1.0, 32)
    mu = complex_dilatation(ComplexField.from_function(spec, lambda z: z + 0.3 * np.conj(z)))
    assert_allclose(mu.values, 0.3, atol=1e-12)


def test_complex_dilatation_of_identity_is_zero():
    mu = complex_dilatation(MapField.identity(GridSpec(0j, 1.0, 32)))
    assert_allclose(mu.values, 0.0, atol=1e-14)


def test_complex_dilatation_of_antiholomorphic_map_is_degenerate():
    spec = GridSpec(0j, 1.0, 32)
    with pytest.raises(DegenerateDilatationError):
        complex_dilatation(ComplexField.from_function(spec, np.conj))


def test_complex_dilatation_of_radial_stretch():
    """z |z| has mu = (1/3) z / conj(z) away from the origin"""
    spec = GridSpec(0j, 1.0, 256)
    mu = complex_dilatation(ComplexField.from_function(spec, lambda z: z * np.abs(z)))
    z = spec.nodes()
    ring = (np.abs(z) > 0.2) & (np.abs(z) < 0.9)
    assert_allclose(mu.values[ring], (z / (3.0 * np.conj(z)))[ring], atol=1e-2)


def test_jacobian_of_linear_map():
    spec = GridSpec(0j, 1.0, 16)
    jac = jacobian(ComplexField.from_function(spec, lambda z: 2.0 * z + 0.5 * np.conj(z)))
    assert_allclose(jac.values, 4.0 - 0.25, atol=1e-12)


def test_wirtinger_derivatives_of_polynomial():
    spec = GridSpec(0j, 1.0, 64)
    f_z, f_zbar = wirtinger_derivatives(ComplexField.from_function(spec, lambda z: z ** 2))
    interior = spec.interior_mask(1)
    assert_allclose(f_z.values[interior], 2.0 * spec.nodes()[interior], atol=1e-12)
    assert_allclose(f_zbar.values[interior], 0.0, atol=1e-12)


def test_max_dilatation():
    assert max_dilatation(0.5) == pytest.approx(3.0)
    assert max_dilatation(0.0) == 1.0
    assert_allclose(max_dilatation(np.array([0.0, 0.5j])), [1.0, 3.0])
    with pytest.raises(DegenerateDilatationError):
        max_dilatation(1.0)


def test_chordal_distance_values():
    assert chordal_distance(0, ExtendedPoint.infinity()) == pytest.approx(1.0)
    assert chordal_distance(1, -1) == pytest.approx(1.0)
    assert chordal_distance(ExtendedPoint.infinity(), math.inf) == 0.0
    assert chordal_distance(2 + 1j, 2 + 1j) == 0.0
    assert chordal_distance(0.3, 4j) == pytest.approx(chordal_distance(4j, 0.3))


def test_chordal_diameter():
    assert chordal_diameter([0, ExtendedPoint.infinity()]) == pytest.approx(1.0)
    assert chordal_diameter([1j]) == 0.0
    with pytest.raises(PreconditionError):
        chordal_diameter([])


def test_sample_field_is_exact_for_linear_functions():
    spec = GridSpec(0j, 1.0, 32)
    field = ComplexField.from_function(spec, lambda z: 2.0 * z + 1.0 - 3.0 * np.conj(z))
    points = np.array([0.123 - 0.456j, -0.7 + 0.2j, 0.9 + 0.9j])
    assert_allclose(sample_field(field, points), 2.0 * points + 1.0 - 3.0 * np.conj(points), atol=1e-12)


def test_sample_field_outside_grid_is_missing():
    spec = GridSpec(0j, 1.0, 16)
    samples = sample_field(RealField.zeros(spec), np.array([2.0 + 0j, 0.1 + 0j]))
    assert np.isnan(samples[0])
    assert samples[1] == 0.0


def test_injectivity_proxy():
    spec = GridSpec(0j, 1.0, 16)
    assert MapField.identity(spec).is_injective_proxy()
    assert not MapField(ComplexField.zeros(spec)).is_injective_proxy()


def test_tail_residual_of_identity():
    assert MapField.identity(GridSpec(0j, 1.0, 16)).tail_residual == 0.0
