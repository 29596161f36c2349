"""
Blab Admissibility - Pointwise constraints, Q profiles and their integrability tests

Verdicts produced here come from finite grids and finite scale ranges.
They are labelled empirical and never stand in for a proof.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import DegenerateDilatationError, FieldError, GridError, PreconditionError, SupportError
from .fields import ComplexField, DilatationField, GridSpec, RealField, max_dilatation, sample_field

logger = logging.getLogger(__name__)

DEFAULT_SAFETY = 1e-3
MEMBERSHIP_TOLERANCE = 1e-12
MEMBERSHIP_FRACTION = 1e-3
MIN_CIRCLE_SAMPLES = 64
CLASSIFIED_OCTAVES = 4
CONVERGENT_RATIO = 0.7
DIVERGENT_RATIO = 0.8
FMO_SLOPE_THRESHOLD = 0.5
MIN_SCHEDULE = 4

ValueOrFunction = Union[complex, float, Callable[[np.ndarray], np.ndarray]]


class DivergenceVerdict(Enum):
    DIVERGES = "diverges"
    CONVERGES = "converges"
    INCONCLUSIVE = "inconclusive"

    @property
    def label(self) -> str:
        if self is DivergenceVerdict.INCONCLUSIVE:
            return self.value
        return f"{self.value} (empirical)"


class FmoVerdict(Enum):
    CONSISTENT = "FMO-consistent (empirical)"
    VIOLATED = "FMO-violated (empirical)"


def _evaluate(value: ValueOrFunction, nodes: np.ndarray) -> np.ndarray:
    if callable(value):
        return np.asarray(value(nodes))
    return np.full(nodes.shape, value)


@dataclass(frozen=True, eq=False)
class SetConstraint:
    """Disk-valued constraint M(z) = closed disk of center c(z) and radius rho(z)"""

    center: ComplexField
    radius: RealField
    safety: float = DEFAULT_SAFETY
    support_radius: Optional[float] = None

    def __post_init__(self):
        if self.center.spec != self.radius.spec:
            raise GridError("Constraint center and radius live on different grids")
        c = self.center.values
        rho = self.radius.values
        if np.isnan(c).any() or np.isnan(rho).any():
            raise FieldError("Constraint contains missing samples")
        if np.any(rho < 0):
            raise FieldError("Constraint radius must be nonnegative")
        if not 0 < self.safety < 1:
            raise PreconditionError(f"Safety margin must lie in (0, 1), got {self.safety}")
        reach = np.abs(c) + rho
        if np.any(reach > 1.0 - self.safety + 1e-12):
            raise FieldError(f"Constraint reaches |c| + rho = {reach.max():.6g}, above 1 - {self.safety:g}")
        if self.support_radius is not None:
            outside = self.spec.radius_from_center() > self.support_radius
            if np.any(c[outside] != 0) or np.any(rho[outside] != 0):
                raise SupportError("Constraint is not the point {0} outside its declared support")

    @property
    def spec(self) -> GridSpec:
        return self.radius.spec

    @classmethod
    def disks(
        cls,
        spec: GridSpec,
        center: ValueOrFunction,
        radius: ValueOrFunction,
        support_radius: Optional[float] = None,
        safety: float = DEFAULT_SAFETY,
    ) -> "SetConstraint":
        nodes = spec.nodes()
        c = _evaluate(center, nodes).astype(np.complex128)
        rho = _evaluate(radius, nodes).astype(np.float64)
        if support_radius is not None:
            outside = np.abs(nodes - spec.center) > support_radius
            c = np.where(outside, 0.0, c)
            rho = np.where(outside, 0.0, rho)
        return cls(ComplexField(spec, c), RealField(spec, rho), safety, support_radius)

    def contains(self, mu_values: np.ndarray, tolerance: float = MEMBERSHIP_TOLERANCE) -> np.ndarray:
        return np.abs(mu_values - self.center.values) <= self.radius.values + tolerance


def q_sup(constraint: SetConstraint) -> RealField:
    """q(z) = sup of |w| over M(z) = |c(z)| + rho(z)"""
    return RealField(constraint.spec, np.abs(constraint.center.values) + constraint.radius.values)


@dataclass(frozen=True, eq=False)
class QProfile:
    """Measurable majorant Q >= 1 of the maximal dilatation"""

    field: RealField

    def __post_init__(self):
        values = self.field.values
        if self.field.missing.any():
            raise FieldError("Q profile contains missing samples")
        if np.any(values < 1.0 - 1e-12):
            raise FieldError(f"Q profile must be >= 1, minimum is {values.min():.6g}")

    @property
    def spec(self) -> GridSpec:
        return self.field.spec

    @property
    def values(self) -> np.ndarray:
        return self.field.values

    @classmethod
    def from_function(cls, spec: GridSpec, func) -> "QProfile":
        return cls(RealField.from_function(spec, func))


def Q_from_q(q: RealField) -> QProfile:
    """Q = (1 + q) / (1 - q)"""
    values = q.values
    if np.any(values >= 1.0):
        raise DegenerateDilatationError(f"q reaches {values.max():.6g}; Q is unbounded where q >= 1")
    return QProfile(RealField(q.spec, (1.0 + values) / (1.0 - values)))


def constraint_from_Q(Q: QProfile, support_radius: Optional[float] = None) -> SetConstraint:
    """Centered disks of radius (Q - 1)/(Q + 1), the largest constraint dominated by Q"""
    rho = (Q.values - 1.0) / (Q.values + 1.0)
    safety = min(DEFAULT_SAFETY, 0.5 * (1.0 - float(rho.max())))
    return SetConstraint.disks(Q.spec, 0.0, lambda _: rho, support_radius=support_radius, safety=safety)


def circle_average(Q: QProfile, z0: complex, t: float) -> float:
    """Mean of Q over the circle |z - z0| = t from bilinear samples"""
    h = Q.spec.spacing
    if not t > 2.0 * h:
        raise PreconditionError(f"Circle radius {t:.6g} is not resolved (needs > {2.0 * h:.6g})")
    n = max(MIN_CIRCLE_SAMPLES, math.ceil(2.0 * math.pi * t / h))
    points = z0 + t * np.exp(2j * np.pi * np.arange(n) / n)
    if not Q.spec.contains(points).all():
        raise SupportError(f"Circle of radius {t:.6g} about {z0} leaves the grid")
    return float(np.mean(sample_field(Q.field, points)))


@dataclass(frozen=True, eq=False)
class DivergenceTable:
    taus: np.ndarray
    integrals: np.ndarray
    increments: np.ndarray
    verdict: DivergenceVerdict

    def rows(self):
        return [(float(t), float(i)) for t, i in zip(self.taus, self.integrals)]


def _classify(increments: np.ndarray) -> DivergenceVerdict:
    if increments.size < CLASSIFIED_OCTAVES or np.any(increments[-CLASSIFIED_OCTAVES:] <= 0):
        return DivergenceVerdict.INCONCLUSIVE
    tail = increments[-CLASSIFIED_OCTAVES:]
    ratios = tail[1:] / tail[:-1]
    if np.all(ratios <= CONVERGENT_RATIO):
        return DivergenceVerdict.CONVERGES
    if np.all(ratios >= DIVERGENT_RATIO):
        return DivergenceVerdict.DIVERGES
    return DivergenceVerdict.INCONCLUSIVE


def divergence_integral(
    q: Callable[[np.ndarray], np.ndarray], delta0: float, t_min: float, substeps: int = 16
) -> DivergenceTable:
    """Integral of dt / (t q(t)) from tau to delta0, tabulated at tau = delta0 * 2^-j

    The verdict reads the growth of the last octave increments: a geometric
    decay means a finite limit, increments that stay comparable mean growth
    without bound.
    """
    if not 0 < t_min < delta0:
        raise PreconditionError(f"Need 0 < t_min < delta0, got t_min={t_min}, delta0={delta0}")
    octaves = int(math.floor(math.log2(delta0 / t_min)))
    if octaves < 1:
        raise PreconditionError("Scale range spans less than one octave")
    # sigma = log(delta0 / t), so dt / (t q) = d sigma / q
    sigma = math.log(2.0) * np.arange(octaves * substeps + 1) / substeps
    weights = np.asarray(q(delta0 * np.exp(-sigma)), dtype=np.float64)
    if np.any(~np.isfinite(weights)) or np.any(weights <= 0):
        raise PreconditionError("Circle averages must be positive and finite")
    cumulative = cumulative_trapezoid(1.0 / weights, sigma, initial=0.0)
    integrals = cumulative[::substeps]
    increments = np.diff(integrals)
    verdict = _classify(increments)
    logger.debug("Divergence integral over %d octaves: %s", octaves, verdict.value)
    return DivergenceTable(
        taus=delta0 * 2.0 ** -np.arange(octaves + 1), integrals=integrals, increments=increments, verdict=verdict
    )


def divergence_check(Q: QProfile, z0: complex, delta0: float, t_min: float, substeps: int = 4) -> DivergenceTable:
    """divergence_integral driven by circle averages of a sampled Q"""
    h = Q.spec.spacing
    if not t_min > 2.0 * h:
        raise PreconditionError(f"t_min = {t_min:.6g} is below the resolved scale {2.0 * h:.6g}")

    def averages(radii: np.ndarray) -> np.ndarray:
        return np.array([circle_average(Q, z0, float(t)) for t in np.atleast_1d(radii)])

    return divergence_integral(averages, delta0, t_min, substeps)


@dataclass(frozen=True, eq=False)
class FmoReport:
    eps: np.ndarray
    means: np.ndarray
    deviations: np.ndarray
    limsup: float
    slope: float
    verdict: FmoVerdict

    def rows(self):
        return [(float(e), float(m), float(d)) for e, m, d in zip(self.eps, self.means, self.deviations)]


def default_schedule(spec: GridSpec, count: int = 12) -> np.ndarray:
    return np.geomspace(spec.half_width / 8.0, 4.0 * spec.spacing, count)


def fmo_estimate(Q: QProfile, z0: complex, eps_schedule: Optional[Sequence[float]] = None) -> FmoReport:
    """Mean oscillation of Q over shrinking disks B(z0, eps)"""
    spec = Q.spec
    h = spec.spacing
    eps = default_schedule(spec) if eps_schedule is None else np.asarray(eps_schedule, dtype=np.float64)
    if eps.size < MIN_SCHEDULE:
        raise PreconditionError(f"Radius schedule needs at least {MIN_SCHEDULE} entries, got {eps.size}")
    if np.any(np.diff(eps) >= 0):
        raise PreconditionError("Radius schedule must be strictly decreasing")
    if eps.min() < 4.0 * h:
        raise PreconditionError(f"Smallest radius {eps.min():.6g} is under 4 grid spacings ({4.0 * h:.6g})")
    extent = np.array([z0 + eps[0], z0 - eps[0], z0 + 1j * eps[0], z0 - 1j * eps[0]])
    if not spec.contains(extent).all():
        raise SupportError("Largest disk leaves the grid")

    distance = np.abs(spec.nodes() - z0)
    means = np.empty(eps.size)
    deviations = np.empty(eps.size)
    for i, radius in enumerate(eps):
        values = Q.values[distance < radius]
        means[i] = values.mean()
        deviations[i] = np.abs(values - means[i]).mean()

    tail = slice(eps.size // 2, None)
    limsup = float(deviations[tail].max())
    floor = 1e-12 * max(1.0, float(means.max()))
    if np.all(deviations[tail] <= floor):
        slope = 0.0
    else:
        slope = float(
            np.polyfit(np.log(1.0 / eps[tail]), np.log(np.maximum(deviations[tail], floor)), 1)[0]
        )
    verdict = FmoVerdict.VIOLATED if slope >= FMO_SLOPE_THRESHOLD else FmoVerdict.CONSISTENT
    return FmoReport(eps=eps, means=means, deviations=deviations, limsup=limsup, slope=slope, verdict=verdict)


def integrability_check(Q: QProfile, center: Optional[complex] = None, radius: Optional[float] = None) -> float:
    """Cell quadrature of Q over a disk, or over the whole grid when no disk is given"""
    spec = Q.spec
    if radius is None:
        return float(Q.values.sum() * spec.cell_area)
    center = spec.center if center is None else center
    extent = np.array([center + radius, center - radius, center + 1j * radius, center - 1j * radius])
    if not spec.contains(extent).all():
        raise SupportError("Integration disk leaves the grid")
    return float(Q.values[spec.disk_mask(center, radius)].sum() * spec.cell_area)


@dataclass(frozen=True, slots=True)
class MembershipReport:
    violating_fraction: float
    max_excess: float
    allowed_fraction: float = MEMBERSHIP_FRACTION

    @property
    def verdict(self) -> bool:
        return self.violating_fraction <= self.allowed_fraction


def membership_ae(mu: DilatationField, constraint: SetConstraint) -> MembershipReport:
    """Fraction of nodes where mu leaves M(z)"""
    if mu.spec != constraint.spec:
        raise GridError("Dilatation and constraint live on different grids")
    excess = np.abs(mu.values - constraint.center.values) - constraint.radius.values
    violating = excess > MEMBERSHIP_TOLERANCE
    return MembershipReport(violating_fraction=float(violating.mean()), max_excess=float(max(0.0, excess.max())))


def dilatation_bound_check(mu: DilatationField, Q: QProfile) -> MembershipReport:
    """Fraction of nodes where K_mu exceeds Q"""
    if mu.spec != Q.spec:
        raise GridError("Dilatation and Q profile live on different grids")
    excess = max_dilatation(mu.values) - Q.values
    violating = excess > MEMBERSHIP_TOLERANCE * np.maximum(1.0, Q.values)
    return MembershipReport(violating_fraction=float(violating.mean()), max_excess=float(max(0.0, excess.max())))


@dataclass(frozen=True, slots=True)
class DiskAutomorphism:
    """w -> e^{i theta} (w - a) / (1 - conj(a) w)"""

    a: complex
    theta: float = 0.0

    def __post_init__(self):
        if abs(self.a) >= 1.0:
            raise PreconditionError(f"Disk automorphism needs |a| < 1, got {abs(self.a):.6g}")

    def __call__(self, w):
        return np.exp(1j * self.theta) * (w - self.a) / (1.0 - np.conj(self.a) * w)

    def inverse(self, w):
        u = np.exp(-1j * self.theta) * np.asarray(w)
        return (u + self.a) / (1.0 + np.conj(self.a) * u)


def disk_automorphism(a: complex, theta: float = 0.0) -> DiskAutomorphism:
    return DiskAutomorphism(complex(a), float(theta))


def disk_image_convex(center: complex, radius: float, automorphism: DiskAutomorphism, samples: int = 1000) -> bool:
    """True when every pairwise midpoint of the image boundary stays in the image of the disk"""
    if abs(center) + radius >= 1.0:
        raise PreconditionError("Disk must lie inside the unit disk")
    boundary = automorphism(center + radius * np.exp(2j * np.pi * np.arange(samples) / samples))
    midpoints = 0.5 * (boundary[:, np.newaxis] + boundary[np.newaxis, :])
    preimages = automorphism.inverse(midpoints)
    return bool(np.all(np.abs(preimages - center) <= radius * (1.0 + 1e-9) + 1e-12))


def convexity_probe(
    constraint: SetConstraint, automorphism: DiskAutomorphism, samples: int = 1000, max_nodes: int = 16
) -> bool:
    """disk_image_convex over up to max_nodes evenly spread nodes where M(z) is a proper disk"""
    c = constraint.center.values.ravel()
    rho = constraint.radius.values.ravel()
    proper = np.flatnonzero(rho > 0)
    if proper.size == 0:
        return True
    picked = proper[np.linspace(0, proper.size - 1, min(max_nodes, proper.size)).astype(int)]
    return all(disk_image_convex(complex(c[i]), float(rho[i]), automorphism, samples) for i in picked)
