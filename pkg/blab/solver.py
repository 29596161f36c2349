"""
Blab Solver - Principal solutions of the Beltrami equation and their certificates

The principal solution is f = z + P[h], where h is the fixed point of
h = mu * S[h] + mu, reached by Neumann iteration.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy import ndimage
from scipy.spatial import Delaunay, cKDTree

from .admissibility import SetConstraint, membership_ae
from .errors import (
    ConvergenceError,
    DegenerateDilatationError,
    GridError,
    InversionError,
    PreconditionError,
    SupportError,
)
from .fields import (
    ComplexField,
    DilatationField,
    GridSpec,
    MapField,
    dilatation_ratio,
    jacobian,
    sample_field,
    wirtinger_derivatives,
)
from .transforms import BOUNDARY_CLEARANCE, TransformPlan, l2_norm

logger = logging.getLogger(__name__)

MAX_K = 0.97
HOMEOMORPHIC_FRACTION = 0.99
TAIL_WINDOW_DIVISOR = 1.5
MIN_TAIL_SAMPLES = 8
ENERGY_SLACK = 1.1
MIN_SUPPORT_COVERAGE = 0.5


@dataclass(frozen=True)
class SolverConfig:
    plan: TransformPlan
    max_iterations: int = 500
    residual_tol: float = 1e-10

    def __post_init__(self):
        if self.max_iterations < 1:
            raise PreconditionError(f"max_iterations must be positive, got {self.max_iterations}")
        if not self.residual_tol > 0:
            raise PreconditionError(f"residual_tol must be positive, got {self.residual_tol}")

    @classmethod
    def for_grid(cls, spec: GridSpec, pad_factor: int = 2, **kwargs) -> "SolverConfig":
        return cls(TransformPlan(spec, pad_factor), **kwargs)

    def on_grid(self, spec: GridSpec) -> "SolverConfig":
        """Same tolerances, new plan when the grid differs"""
        if spec == self.plan.spec:
            return self
        return SolverConfig.for_grid(
            spec, self.plan.pad_factor, max_iterations=self.max_iterations, residual_tol=self.residual_tol
        )


@dataclass(frozen=True, slots=True)
class KoebeVerdict:
    r0_inv: float
    max_inner_modulus: float
    max_cover_gap: float
    inner_ok: bool
    outer_ok: bool

    @property
    def verdict(self) -> bool:
        return self.inner_ok and self.outer_ok


@dataclass(frozen=True, slots=True)
class TailReport:
    decay_exponent: float
    tail_sup: float
    samples: int


@dataclass(frozen=True)
class SolutionReport:
    iterations_used: int
    final_residual: float
    converged: bool
    k_max: float
    support_radius: float
    tail_residual: float
    min_interior_jacobian: float
    jacobian_positive_fraction: float
    hydrodynamic: bool
    homeomorphic_proxy: bool
    regular_proxy: bool
    koebe: KoebeVerdict
    increments: Tuple[float, ...] = field(default=(), repr=False)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["koebe"]["verdict"] = self.koebe.verdict
        data["increments"] = list(self.increments)
        return data


def _absolute_radius(mu: DilatationField) -> float:
    return abs(mu.spec.center) + mu.support_radius


def _inscribed_radius(spec: GridSpec) -> float:
    """Radius of the largest origin-centered disk inside the grid square"""
    return spec.half_width - max(abs(spec.center.real), abs(spec.center.imag))


def _check_solvable(mu: DilatationField, plan: TransformPlan) -> None:
    if mu.k_max > MAX_K:
        raise DegenerateDilatationError(f"k_max = {mu.k_max:.6g} exceeds the solver cap {MAX_K}")
    if mu.spec != plan.spec:
        raise GridError("Dilatation grid does not match the solver configuration")
    if mu.support_radius >= mu.spec.half_width:
        raise SupportError(
            f"Support radius {mu.support_radius:.6g} must be below the grid half width {mu.spec.half_width:.6g}"
        )
    if mu.clearance_cells() < BOUNDARY_CLEARANCE:
        raise SupportError("Dilatation support reaches the grid boundary")


def _neumann_density(mu: DilatationField, config: SolverConfig) -> Tuple[np.ndarray, Tuple[float, ...]]:
    plan = config.plan
    values = mu.values
    density = values.copy()
    increments = []
    for iteration in range(1, config.max_iterations + 1):
        updated = values * plan.beurling_values(density) + values
        increment = l2_norm(updated - density, mu.spec)
        increments.append(increment)
        density = updated
        logger.debug("Neumann iteration %d: increment %.3e", iteration, increment)
        if increment <= config.residual_tol:
            return density, tuple(increments)
    raise ConvergenceError("Neumann iteration did not converge", increments[-1], config.max_iterations)


def solve_principal(mu: DilatationField, config: SolverConfig) -> Tuple[MapField, SolutionReport]:
    """Principal solution f = z + O(1/z) of f_zbar = mu f_z"""
    _check_solvable(mu, config.plan)
    density, increments = _neumann_density(mu, config)
    spec = mu.spec
    values = spec.nodes() + config.plan.cauchy_values(density)
    radius = _absolute_radius(mu)
    f = MapField(ComplexField(spec, values), is_hydrodynamic=True, support_radius=radius)

    interior = spec.interior_mask(1)
    jac = jacobian(f).values[interior]
    positive_fraction = float(np.mean(jac > 0))
    koebe = koebe_report(f, radius)
    report = SolutionReport(
        iterations_used=len(increments),
        final_residual=increments[-1],
        converged=True,
        k_max=mu.k_max,
        support_radius=radius,
        tail_residual=f.tail_residual,
        min_interior_jacobian=float(jac.min()),
        jacobian_positive_fraction=positive_fraction,
        hydrodynamic=_hydrodynamic_flag(f, radius),
        homeomorphic_proxy=f.is_injective_proxy() and positive_fraction >= HOMEOMORPHIC_FRACTION,
        regular_proxy=positive_fraction >= HOMEOMORPHIC_FRACTION,
        koebe=koebe,
        increments=increments,
    )
    logger.info(
        "Principal solution: %d iterations, residual %.3e, tail %.3e",
        report.iterations_used,
        report.final_residual,
        report.tail_residual,
    )
    return f, report


def koebe_report(f: MapField, r0_inv: float) -> KoebeVerdict:
    """Checks f(B(0, r0)) inside B(0, 4 r0) and f covering the annulus beyond 4 r0"""
    if r0_inv <= 0:
        raise PreconditionError(f"Koebe radius must be positive, got {r0_inv}")
    if f.support_radius is not None and f.support_radius > r0_inv * (1 + 1e-12):
        raise PreconditionError(f"Support radius {f.support_radius:.6g} is not inside B(0, {r0_inv:.6g})")
    spec = f.spec
    nodes = spec.nodes()
    valid = ~f.field.missing
    radius = np.abs(nodes)

    inner = valid & (radius < r0_inv)
    max_inner = float(np.abs(f.values[inner]).max()) if inner.any() else 0.0

    ring = valid & ~spec.interior_mask(1)
    displacement = float(np.abs(f.values[ring] - nodes[ring]).max()) if ring.any() else 0.0
    outer_radius = _inscribed_radius(spec) - displacement - spec.spacing
    targets = nodes[(radius >= 4.0 * r0_inv) & (radius <= outer_radius)]
    if targets.size == 0:
        gap = 0.0
    else:
        # the annulus must be covered by images of |z| >= r0
        image = f.values[valid & (radius >= r0_inv)]
        tree = cKDTree(np.column_stack([image.real, image.imag]))
        distances, _ = tree.query(np.column_stack([targets.real, targets.imag]))
        gap = float(distances.max())
    return KoebeVerdict(
        r0_inv=float(r0_inv),
        max_inner_modulus=max_inner,
        max_cover_gap=gap,
        inner_ok=max_inner < 4.0 * r0_inv,
        outer_ok=gap <= spec.spacing,
    )


def tail_report(f: MapField, r_supp: float) -> TailReport:
    """Fits log |f(z) - z| against log |z| over 2 r_supp <= |z| <= L / 1.5"""
    spec = f.spec
    if _inscribed_radius(spec) < 4.0 * r_supp:
        raise PreconditionError(f"Grid must extend to 4 * r_supp = {4.0 * r_supp:.6g} for a tail fit")
    nodes = spec.nodes()
    radius = np.abs(nodes)
    residual = np.abs(f.values - nodes)
    valid = ~f.field.missing
    far = valid & (radius >= 2.0 * r_supp)
    window = far & (radius <= spec.half_width / TAIL_WINDOW_DIVISOR)
    samples = int(window.sum())
    if samples < MIN_TAIL_SAMPLES:
        raise PreconditionError(f"Only {samples} nodes in the tail window, need {MIN_TAIL_SAMPLES}")
    tail_sup = float(residual[far].max())
    floor = 1e-14 * max(1.0, spec.half_width)
    usable = window & (residual > floor)
    if usable.sum() < MIN_TAIL_SAMPLES:
        exponent = -math.inf
    else:
        exponent = float(np.polyfit(np.log(radius[usable]), np.log(residual[usable]), 1)[0])
    return TailReport(decay_exponent=exponent, tail_sup=tail_sup, samples=samples)


def _hydrodynamic_flag(f: MapField, r_supp: float, tail_tol: Optional[float] = None) -> bool:
    tail_tol = r_supp if tail_tol is None else tail_tol
    try:
        tail = tail_report(f, r_supp)
    except PreconditionError:
        residual = f.tail_residual
        return residual is not None and residual <= tail_tol
    return tail.tail_sup <= tail_tol and tail.decay_exponent <= -0.9


@dataclass(frozen=True, slots=True)
class ClassFlags:
    hydrodynamic: bool
    jacobian_positive: bool
    in_constraint: bool
    jacobian_positive_fraction: float
    inside_fraction: float

    @property
    def member(self) -> bool:
        return self.hydrodynamic and self.jacobian_positive and self.in_constraint


def class_membership_check(
    f: MapField, mu: DilatationField, constraint: SetConstraint, tail_tol: Optional[float] = None
) -> ClassFlags:
    """Hydrodynamic normalization, positive Jacobian a.e. and mu in the constraint a.e."""
    radius = _absolute_radius(mu)
    fraction = float(np.mean(jacobian(f).values[f.spec.interior_mask(1)] > 0))
    membership = membership_ae(mu, constraint)
    return ClassFlags(
        hydrodynamic=_hydrodynamic_flag(f, radius, tail_tol),
        jacobian_positive=fraction >= HOMEOMORPHIC_FRACTION,
        in_constraint=membership.verdict,
        jacobian_positive_fraction=fraction,
        inside_fraction=1.0 - membership.violating_fraction,
    )


class TriangulatedInverse:
    """Piecewise-linear inverse of a sampled map over the Delaunay triangulation of its image"""

    def __init__(self, f: MapField):
        if not f.is_injective_proxy():
            raise InversionError("Map is not injective on the grid (coincident image points)")
        valid = ~f.field.missing
        image = f.values[valid]
        self._sources = f.spec.nodes()[valid]
        try:
            self._triangulation = Delaunay(np.column_stack([image.real, image.imag]))
        except (RuntimeError, ValueError) as exc:
            raise InversionError(f"Cannot triangulate the image: {exc}") from exc

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.complex128)
        flat = points.ravel()
        xy = np.column_stack([flat.real, flat.imag])
        simplex = self._triangulation.find_simplex(xy)
        inside = simplex >= 0
        transform = self._triangulation.transform[simplex[inside]]
        delta = xy[inside] - transform[:, 2]
        bary = np.einsum("njk,nk->nj", transform[:, :2, :], delta)
        weights = np.hstack([bary, 1.0 - bary.sum(axis=1, keepdims=True)])
        vertices = self._triangulation.simplices[simplex[inside]]
        out = np.full(flat.shape, np.nan, dtype=np.complex128)
        out[inside] = np.einsum("nj,nj->n", self._sources[vertices], weights)
        return out.reshape(points.shape)


@dataclass(frozen=True, eq=False)
class InverseMap:
    map: MapField
    round_trip_error: float
    missing_fraction: float


def invert_map(f: MapField, target: Optional[GridSpec] = None) -> InverseMap:
    """Sample g = f^{-1} on a grid; nodes outside f's sampled image stay missing"""
    target = target or f.spec
    inverse = TriangulatedInverse(f)
    g = ComplexField(target, inverse(target.nodes()))
    interior = f.spec.interior_mask(2) & ~f.field.missing
    back = sample_field(g, f.values[interior])
    errors = np.abs(back - f.spec.nodes()[interior])
    round_trip = float(np.nanmax(errors)) if np.isfinite(errors).any() else math.nan
    missing = float(g.missing.mean())
    if missing > 0:
        logger.info("Inverse map misses %.1f%% of target nodes", 100.0 * missing)
    return InverseMap(map=MapField(g), round_trip_error=round_trip, missing_fraction=missing)


@dataclass(frozen=True, slots=True)
class EnergyReport:
    lhs: float
    rhs: float
    image_radius: float
    verdict: bool


def inverse_energy_check(f: MapField, mu: DilatationField, center: complex, radius: float) -> EnergyReport:
    """Compares the integral of |d g|^2 over C0 with the integral of 1/(1-|mu|^2) over B(0, A+1)"""
    spec = f.spec
    if not spec.contains(np.array([center + radius, center - radius, center + 1j * radius, center - 1j * radius])).all():
        raise PreconditionError("Compact set leaves the grid")
    g = invert_map(f).map
    g_z, _ = wirtinger_derivatives(g)
    mask = spec.disk_mask(center, radius) & np.isfinite(g_z.values)
    if not mask.any():
        raise PreconditionError("No grid nodes inside the compact set")
    lhs = float(np.sum(np.abs(g_z.values[mask]) ** 2) * spec.cell_area)
    image_radius = float(np.abs(g.values[mask]).max())

    # the integrand is 1 wherever mu vanishes, including off the grid
    ball = np.abs(mu.spec.nodes()) < image_radius + 1.0
    excess = 1.0 / (1.0 - np.abs(mu.values[ball]) ** 2) - 1.0
    rhs = float(np.sum(excess) * mu.spec.cell_area + math.pi * (image_radius + 1.0) ** 2)
    return EnergyReport(lhs=lhs, rhs=rhs, image_radius=image_radius, verdict=lhs <= ENERGY_SLACK * rhs)


@dataclass(frozen=True, slots=True)
class InverseDilatationReport:
    max_deviation: float
    nodes_checked: int
    support_nodes: int = 0
    support_fraction: float = 1.0


def _stencil_average(values: np.ndarray) -> np.ndarray:
    values = np.nan_to_num(values)
    return ndimage.uniform_filter(values.real, 3) + 1j * ndimage.uniform_filter(values.imag, 3)


def inverse_dilatation_check(
    f: MapField, mu: DilatationField, region: Optional[Tuple[float, float]] = None
) -> InverseDilatationReport:
    """Measures |mu_g(w) + mu(g(w)) f_z(g(w)) / conj(f_z(g(w)))| for g = f^{-1}

    The value vanishes when g inverts a solution with dilatation mu; the
    phase factor is 1 wherever f_z is real and positive, as for radial
    stretches. region restricts a pointwise check to r_in <= |g(w)| <= r_out.
    Without it, mu_g is compared against the expected value averaged over
    the difference stencil, so jumps of a sampled mu are matched rather than
    skipped, and the checked share of the support is reported.
    """
    g = invert_map(f).map
    g_z, g_zbar = wirtinger_derivatives(g)
    scale = g_z.max_modulus()
    mu_g = dilatation_ratio(g_z.values, g_zbar.values, 1e-12 * scale if scale > 0 else np.finfo(float).tiny)
    f_z, _ = wirtinger_derivatives(f)
    with np.errstate(invalid="ignore", divide="ignore"):
        phase = np.where(np.abs(f_z.values) > 0, f_z.values / np.conj(f_z.values), 1.0)
    mu_at = sample_field(mu, g.values)
    expected = mu_at * sample_field(ComplexField(f.spec, phase), g.values)
    finite = np.isfinite(expected) & np.isfinite(mu_g)
    mask = g.spec.interior_mask(2) & finite
    if region is not None:
        inner, outer = region
        pre = np.abs(g.values)
        mask &= (pre >= inner) & (pre <= outer)
        deviation = np.abs(mu_g + expected)
    else:
        mask &= ~ndimage.binary_dilation(~finite, np.ones((3, 3), dtype=bool))
        deviation = np.abs(mu_g + _stencil_average(expected))
    if not mask.any():
        raise PreconditionError("No interior image nodes to check")

    with np.errstate(invalid="ignore"):
        support = g.spec.interior_mask(2) & (np.abs(mu_at) > 0)
    if region is not None:
        support &= (pre >= inner) & (pre <= outer)
    covered = int((support & mask).sum())
    fraction = covered / int(support.sum()) if support.any() else 1.0
    if fraction < MIN_SUPPORT_COVERAGE:
        raise PreconditionError(f"Only {100.0 * fraction:.1f}% of the dilatation support could be checked")
    return InverseDilatationReport(
        max_deviation=float(deviation[mask].max()),
        nodes_checked=int(mask.sum()),
        support_nodes=covered,
        support_fraction=fraction,
    )
