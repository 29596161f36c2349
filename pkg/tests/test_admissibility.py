"""
Tests for set constraints, Q profiles and the empirical integrability verdicts
"""
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from blab.admissibility import (
    DivergenceVerdict,
    FmoVerdict,
    QProfile,
    Q_from_q,
    SetConstraint,
    circle_average,
    constraint_from_Q,
    convexity_probe,
    dilatation_bound_check,
    disk_automorphism,
    disk_image_convex,
    divergence_check,
    divergence_integral,
    fmo_estimate,
    integrability_check,
    membership_ae,
    q_sup,
)
from blab.errors import DegenerateDilatationError, FieldError, PreconditionError, SupportError
from blab.fields import ComplexField, DilatationField, GridSpec, RealField


@pytest.fixture
def fine_grid():
    return GridSpec(0j, 2.0, 256)


def test_circle_average_of_quadratic(fine_grid):
    """Mean of 1 + |z|^2 over |z| = 1/2 is 5/4"""
    Q = QProfile.from_function(fine_grid, lambda z: 1.0 + np.abs(z) ** 2)
    assert circle_average(Q, 0j, 0.5) == pytest.approx(1.25, abs=2.0 * fine_grid.spacing ** 2)


def test_circle_average_rejects_unresolved_and_escaping_circles(small_grid):
    Q = QProfile.from_function(small_grid, lambda z: np.ones(z.shape))
    with pytest.raises(PreconditionError):
        circle_average(Q, 0j, small_grid.spacing)
    with pytest.raises(SupportError):
        circle_average(Q, 1.5 + 0j, 1.0)


@pytest.mark.parametrize(
    "profile, verdict",
    [
        (lambda t: np.ones_like(t), DivergenceVerdict.DIVERGES),
        (lambda t: 1.0 + np.log(1.0 / t), DivergenceVerdict.DIVERGES),
        (lambda t: 1.0 / t, DivergenceVerdict.CONVERGES),
        (lambda t: t ** -0.4, DivergenceVerdict.INCONCLUSIVE),
    ],
    ids=["constant", "logarithmic", "inverse", "power-0.4"],
)
def test_divergence_integral_verdicts(profile, verdict):
    table = divergence_integral(profile, 1.0, 2.0 ** -20)
    assert table.verdict is verdict
    assert len(table.rows()) == 21
    assert table.integrals[0] == 0.0
    assert np.all(np.diff(table.integrals) > 0)


def test_constant_profile_integral_is_logarithmic():
    table = divergence_integral(lambda t: np.ones_like(t), 1.0, 2.0 ** -10)
    assert_allclose(table.integrals, math.log(2.0) * np.arange(11), rtol=1e-12)


def test_divergence_integral_rejects_bad_range():
    with pytest.raises(PreconditionError):
        divergence_integral(lambda t: np.ones_like(t), 1.0, 2.0)
    with pytest.raises(PreconditionError):
        divergence_integral(lambda t: np.zeros_like(t), 1.0, 0.01)


def test_divergence_check_of_unit_profile(fine_grid):
    Q = QProfile.from_function(fine_grid, lambda z: np.ones(z.shape))
    table = divergence_check(Q, 0j, 1.5, 0.04)
    assert table.verdict is DivergenceVerdict.DIVERGES
    assert table.verdict.label == "diverges (empirical)"


def test_divergence_check_needs_resolved_scales(fine_grid):
    Q = QProfile.from_function(fine_grid, lambda z: np.ones(z.shape))
    with pytest.raises(PreconditionError):
        divergence_check(Q, 0j, 1.5, fine_grid.spacing)


def test_fmo_of_constant_profile(fine_grid):
    report = fmo_estimate(QProfile.from_function(fine_grid, lambda z: np.ones(z.shape)), 0j)
    assert report.verdict is FmoVerdict.CONSISTENT
    assert report.limsup == 0.0
    assert len(report.rows()) == 12


def test_fmo_of_inverse_modulus_is_violated(fine_grid):
    Q = QProfile.from_function(fine_grid, lambda z: np.maximum(1.0, 1.0 / np.abs(z)))
    report = fmo_estimate(Q, 0j)
    assert report.verdict is FmoVerdict.VIOLATED
    assert report.slope >= 0.5


def test_fmo_of_logarithmic_profile_is_consistent(fine_grid):
    Q = QProfile.from_function(fine_grid, lambda z: 1.0 + np.maximum(0.0, -np.log(np.abs(z))))
    report = fmo_estimate(Q, 0j)
    assert report.verdict is FmoVerdict.CONSISTENT


def test_fmo_schedule_must_decrease(fine_grid):
    Q = QProfile.from_function(fine_grid, lambda z: np.ones(z.shape))
    with pytest.raises(PreconditionError):
        fmo_estimate(Q, 0j, [0.1, 0.2, 0.3, 0.4])


def test_integrability_of_unit_profile(fine_grid):
    Q = QProfile.from_function(fine_grid, lambda z: np.ones(z.shape))
    assert integrability_check(Q, 0j, 1.0) == pytest.approx(math.pi, abs=1e-2)
    assert integrability_check(Q) == pytest.approx(16.0)


def test_q_profile_must_be_at_least_one(small_grid):
    with pytest.raises(FieldError):
        QProfile.from_function(small_grid, lambda z: np.full(z.shape, 0.5))


def test_q_and_Q_are_consistent(small_grid):
    constraint = SetConstraint.disks(small_grid, 0.2, 0.3)
    q = q_sup(constraint)
    assert_allclose(q.values, 0.5)
    assert_allclose(Q_from_q(q).values, 3.0)
    with pytest.raises(DegenerateDilatationError):
        Q_from_q(RealField(small_grid, np.ones((32, 32))))


def test_constraint_from_Q(small_grid):
    Q = QProfile.from_function(small_grid, lambda z: np.full(z.shape, 3.0))
    constraint = constraint_from_Q(Q)
    assert_allclose(constraint.radius.values, 0.5)
    assert_allclose(constraint.center.values, 0.0)


def test_constraint_validation(small_grid):
    with pytest.raises(FieldError):
        SetConstraint.disks(small_grid, 0.5, 0.5)
    with pytest.raises(FieldError):
        SetConstraint.disks(small_grid, 0.0, -0.1)
    n = small_grid.resolution
    with pytest.raises(SupportError):
        SetConstraint(ComplexField(small_grid, np.full((n, n), 0.1)), RealField.zeros(small_grid), support_radius=0.5)


def disk_dilatation(spec, value=0.3, radius=0.5):
    return DilatationField.from_function(spec, lambda z: value + 0 * z, radius)


def test_membership(small_grid):
    mu = disk_dilatation(small_grid)
    inside = membership_ae(mu, SetConstraint.disks(small_grid, 0.0, 0.4, support_radius=0.5))
    assert inside.verdict
    assert inside.violating_fraction == 0.0
    outside = membership_ae(mu, SetConstraint.disks(small_grid, 0.0, 0.2, support_radius=0.5))
    assert not outside.verdict
    assert outside.max_excess == pytest.approx(0.1)


def test_dilatation_bound_check(small_grid):
    mu = disk_dilatation(small_grid, value=0.5)
    assert dilatation_bound_check(mu, QProfile.from_function(small_grid, lambda z: np.full(z.shape, 3.0))).verdict
    report = dilatation_bound_check(mu, QProfile.from_function(small_grid, lambda z: np.full(z.shape, 2.0)))
    assert not report.verdict
    assert report.max_excess == pytest.approx(1.0)


def test_disk_automorphism():
    phi = disk_automorphism(0.5 + 0.2j, 0.7)
    assert abs(phi(0.5 + 0.2j)) < 1e-15
    w = np.array([0.1, -0.3j, 0.6 + 0.1j])
    assert_allclose(phi.inverse(phi(w)), w, atol=1e-14)
    assert_allclose(np.abs(phi(np.exp(1j * np.linspace(0, 6, 7)))), 1.0, atol=1e-14)
    with pytest.raises(PreconditionError):
        disk_automorphism(1.0)


def test_automorphic_images_of_disks_are_convex(small_grid):
    phi = disk_automorphism(-0.6j, 1.0)
    assert disk_image_convex(0.3, 0.5, phi, samples=400)
    with pytest.raises(PreconditionError):
        disk_image_convex(0.5, 0.6, phi)
    constraint = SetConstraint.disks(small_grid, lambda z: 0.2 * z / 3.0, 0.4, support_radius=1.0)
    assert convexity_probe(constraint, phi, samples=200, max_nodes=8)
