"""
Blab Dirichlet - Beltrami equation in the unit disk with prescribed real boundary values

Pipeline: pull mu back by a disk automorphism so it vanishes near 0, reflect
it across the unit circle, solve on the plane, normalize into a disk
homeomorphism G with G(z0) = 0, pull the boundary data back
through G and recover the analytic part F with Re F = u on the circle.
The solution is f = F o G.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import polynomial
from scipy import fft, ndimage

from .errors import (
    BlabError,
    BoundaryDeviationError,
    FieldError,
    GridError,
    InversionError,
    PreconditionError,
    StageError,
    SupportError,
)
from .fields import (
    ComplexField,
    DilatationField,
    GridSpec,
    MapField,
    dilatation_ratio,
    jacobian,
    max_dilatation,
    sample_field,
    support_radius,
    wirtinger_derivatives,
)
from .solver import SolutionReport, SolverConfig, TriangulatedInverse, solve_principal

logger = logging.getLogger(__name__)

MIN_BOUNDARY_SAMPLES = 128
EXTENSION_HALF_WIDTH = 4.0
EVALUATION_MARGIN = 1e-6
EXTENSION_MARGIN_CELLS = 5
CRITICAL_DERIVATIVE = 1e-3


def _is_power_of_two(m: int) -> bool:
    return m > 0 and m & (m - 1) == 0


def uniform_angles(m: int) -> np.ndarray:
    return 2.0 * np.pi * np.arange(m) / m


@dataclass(frozen=True, eq=False)
class BoundaryData:
    """Real samples phi(theta_j) at theta_j = 2 pi j / m"""

    values: np.ndarray
    modulus_bound: Optional[float] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).ravel()
        m = values.size
        if m < MIN_BOUNDARY_SAMPLES or not _is_power_of_two(m):
            raise PreconditionError(f"Boundary sample count must be a power of two >= {MIN_BOUNDARY_SAMPLES}, got {m}")
        if not np.isfinite(values).all():
            raise FieldError("Boundary data must be finite")
        if self.modulus_bound is not None:
            jump = float(np.abs(np.diff(np.append(values, values[0]))).max())
            if jump > self.modulus_bound:
                raise FieldError(f"Boundary data jumps by {jump:.6g}, above the declared bound {self.modulus_bound:.6g}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def m(self) -> int:
        return self.values.size

    @property
    def theta(self) -> np.ndarray:
        return uniform_angles(self.m)

    @property
    def oscillation(self) -> float:
        return float(self.values.max() - self.values.min())

    @classmethod
    def from_function(cls, func: Callable[[np.ndarray], np.ndarray], m: int) -> "BoundaryData":
        return cls(func(uniform_angles(m)))

    def at(self, angles: np.ndarray) -> np.ndarray:
        """Periodic linear interpolation in the angle"""
        return np.interp(np.mod(angles, 2.0 * np.pi), self.theta, self.values, period=2.0 * np.pi)


@dataclass(frozen=True, eq=False)
class AnalyticPart:
    """F(y) = sum of a_k y^k, holomorphic in the disk with Im F(0) = 0"""

    coefficients: np.ndarray

    def __post_init__(self):
        coefficients = np.array(self.coefficients, dtype=np.complex128).ravel()
        if coefficients.size == 0:
            raise FieldError("Analytic part needs at least one coefficient")
        if abs(coefficients[0].imag) > 1e-10:
            raise FieldError(f"Im F(0) = {coefficients[0].imag:.3e} must vanish")
        coefficients.setflags(write=False)
        object.__setattr__(self, "coefficients", coefficients)

    def __call__(self, y):
        return polynomial.polyval(np.asarray(y, dtype=np.complex128), self.coefficients)

    def derivative(self, y):
        return polynomial.polyval(np.asarray(y, dtype=np.complex128), polynomial.polyder(self.coefficients))


def schwarz_reconstruct(u: BoundaryData) -> AnalyticPart:
    """Holomorphic F with Re F = u on the circle: a_0 = mean of u, a_k = 2 u_hat(k)"""
    spectrum = fft.rfft(u.values) / u.m
    coefficients = 2.0 * spectrum
    coefficients[0] = spectrum[0].real
    coefficients[-1] = spectrum[-1]
    return AnalyticPart(coefficients)


def evaluate_analytic(F: AnalyticPart, y):
    modulus = np.abs(np.asarray(y))
    if np.any(modulus > 1.0 - EVALUATION_MARGIN):
        raise PreconditionError(f"Analytic part is evaluated only for |y| <= 1 - {EVALUATION_MARGIN:g}")
    return F(y)


def poisson_real_part(u: BoundaryData, y) -> np.ndarray:
    """Re F(y) through discrete Poisson quadrature over the boundary samples"""
    y = np.asarray(y, dtype=np.complex128)
    if np.any(np.abs(y) >= 1.0):
        raise PreconditionError("Poisson integral needs |y| < 1")
    r = np.abs(y)[..., np.newaxis]
    psi = np.angle(y)[..., np.newaxis]
    kernel = (1.0 - r ** 2) / (1.0 - 2.0 * r * np.cos(u.theta - psi) + r ** 2)
    return np.mean(kernel * u.values, axis=-1)


def kernel_bound(R0: float) -> float:
    """(1 + R0) / (1 - R0) bounds the Poisson kernel on |y| <= R0"""
    if not 0 <= R0 < 1:
        raise PreconditionError(f"Kernel bound needs 0 <= R0 < 1, got {R0}")
    return (1.0 + R0) / (1.0 - R0)


def reflect_extend(mu: DilatationField, target: Optional[GridSpec] = None) -> DilatationField:
    """Extends mu from the disk by mu(z) = conj(mu(1/conj z)) z^2 / conj(z)^2 outside

    The extension is truncated three cells inside the target grid so the
    solver keeps its boundary clearance.
    """
    _check_inside_disk(mu)
    target = target or mu.spec.grown(EXTENSION_HALF_WIDTH)
    z = target.nodes()
    radius = np.abs(z)
    inside = radius < 1.0

    values = np.zeros(z.shape, dtype=np.complex128)
    values[inside] = np.nan_to_num(sample_field(mu, z[inside]))
    outside = ~inside
    zo = z[outside]
    mirrored = np.nan_to_num(sample_field(mu, 1.0 / np.conj(zo)))
    values[outside] = np.conj(mirrored) * zo ** 2 / np.conj(zo) ** 2

    truncation = target.half_width - max(abs(target.center.real), abs(target.center.imag)) - 3.0 * target.spacing
    cut = radius > truncation
    if np.any(values[cut] != 0):
        logger.warning("Reflected dilatation is nonzero beyond |z| = %.4g and is truncated there", truncation)
    values[cut] = 0.0
    logger.debug("Reflected dilatation onto N=%d, truncated at |z| = %.4g", target.resolution, truncation)
    return DilatationField.from_values(target, values)


def _check_inside_disk(mu: DilatationField) -> None:
    h = mu.spec.spacing
    if np.any(mu.values[np.abs(mu.spec.nodes()) > 1.0 - 2.0 * h] != 0):
        raise SupportError("Dilatation support touches the unit circle")


@dataclass(frozen=True, eq=False)
class DiskMap:
    G: MapField
    z0: complex
    boundary_deviation: float
    report: SolutionReport
    conjugation_point: float = 0.0


def _disk_shift(z, a: float):
    """T(z) = (z + a) / (1 + a z), the disk automorphism sending 0 to a"""
    return (z + a) / (1.0 + a * z)


def _disk_unshift(w, a: float):
    return (w - a) / (1.0 - a * w)


def conjugation_point(mu: DilatationField, reach: float) -> float:
    """Real a in [0, 1) such that mu pulled back by T vanishes on |z| < 1/reach plus two cells

    The pulled-back coefficient then reflects to a dilatation supported in
    |z| <= reach. Zero when mu vanishes identically.
    """
    spec = mu.spec
    h = spec.spacing
    nonzero = mu.values != 0
    if not nonzero.any():
        return 0.0
    r = float(np.abs(spec.nodes()[nonzero]).max()) + 2.0 * h
    rho = 1.0 / reach + 2.0 * h
    if not (r < 1.0 and rho < 1.0):
        raise SupportError(f"No dilatation-free region for an extension of half width {reach:.4g}")
    return (r + rho) / (1.0 + rho * r)


def pull_back(mu: DilatationField, a: float) -> DilatationField:
    """Dilatation of f o T on the disk, given mu the dilatation of f"""
    if a == 0.0:
        return mu
    z = mu.spec.nodes()
    inside = np.abs(z) < 1.0
    values = np.zeros(z.shape, dtype=np.complex128)
    lift = 1.0 + a * z[inside]
    values[inside] = np.nan_to_num(sample_field(mu, _disk_shift(z[inside], a))) * lift ** 2 / np.conj(lift) ** 2
    return DilatationField(ComplexField(mu.spec, values), support_radius(values, mu.spec), mu.k_max)


def solve_disk_homeomorphism(
    mu: DilatationField,
    z0: complex,
    config: Optional[SolverConfig] = None,
    boundary_tolerance: Optional[float] = None,
    extension_half_width: float = EXTENSION_HALF_WIDTH,
) -> DiskMap:
    """Quasiconformal self-map G of the disk with dilatation mu, G(z0) = 0 and G(1) > 0

    mu is first pulled back by a disk automorphism T so that it vanishes
    near 0; its reflection is then compactly supported on the extended grid
    and needs no truncation. With Phi the plane solution of the reflected
    coefficient, G is the disk automorphism normalizing Phi o T^{-1}.
    """
    spec = mu.spec
    h = spec.spacing
    if not spec.contains(np.array([1.0, -1.0, 1j, -1j])).all():
        raise GridError("Disk grid must cover the closed unit disk")
    if abs(z0) >= 1.0 - 3.0 * h:
        raise PreconditionError(f"Normalization point |z0| = {abs(z0):.6g} is not inside the disk")
    _check_inside_disk(mu)
    target = spec.grown(extension_half_width)
    a = conjugation_point(mu, target.half_width - EXTENSION_MARGIN_CELLS * h)
    extended = reflect_extend(pull_back(mu, a), target)
    config = SolverConfig.for_grid(extended.spec) if config is None else config.on_grid(extended.spec)
    Phi, report = solve_principal(extended, config)

    theta = uniform_angles(max(256, math.ceil(2.0 * math.pi / h)))
    circle = sample_field(Phi, np.exp(1j * theta))
    w_c = complex(sample_field(Phi, np.array([0j]))[0])
    scale = float(np.mean(np.abs(circle - w_c)))
    deviation = float(np.abs(np.abs((circle - w_c) / scale) - 1.0).max())
    tolerance = 2.0 * h if boundary_tolerance is None else boundary_tolerance
    if deviation > tolerance:
        raise BoundaryDeviationError(deviation, tolerance)

    def composed(points: np.ndarray) -> np.ndarray:
        # nodes whose preimage leaves the extended grid stay missing
        with np.errstate(divide="ignore", invalid="ignore"):
            pre = _disk_unshift(points, a)
        far = 1e6 * extended.spec.half_width
        return (sample_field(Phi, np.nan_to_num(pre, nan=far, posinf=far, neginf=-far)) - w_c) / scale

    W = composed(spec.nodes())
    w0 = complex(composed(np.array([complex(z0)]))[0])
    w1 = complex(composed(np.array([1.0 + 0j]))[0])
    G = (W - w0) / (1.0 - np.conj(w0) * W)
    at_one = (w1 - w0) / (1.0 - np.conj(w0) * w1)
    G = G * np.conj(at_one) / abs(at_one)
    logger.info(
        "Disk homeomorphism: boundary deviation %.3e, %d iterations, conjugation point %.4g",
        deviation,
        report.iterations_used,
        a,
    )
    return DiskMap(
        G=MapField(ComplexField(spec, G)),
        z0=complex(z0),
        boundary_deviation=deviation,
        report=report,
        conjugation_point=a,
    )


@dataclass(frozen=True, eq=False)
class BoundaryCorrespondence:
    theta: np.ndarray
    preimages: np.ndarray
    preimage_angles: np.ndarray
    winding: int


def boundary_trace(G: MapField, m: int) -> BoundaryCorrespondence:
    """Angles of G^{-1}(e^{i theta_j}); must increase monotonically with winding number 1"""
    if m < MIN_BOUNDARY_SAMPLES or not _is_power_of_two(m):
        raise PreconditionError(f"Boundary sample count must be a power of two >= {MIN_BOUNDARY_SAMPLES}, got {m}")
    theta = uniform_angles(m)
    preimages = TriangulatedInverse(G)(np.exp(1j * theta))
    if np.isnan(preimages).any():
        raise InversionError("Unit circle is not covered by the sampled image of G")
    angles = np.unwrap(np.angle(preimages))
    steps = np.diff(angles)
    if np.any(steps <= 0):
        raise InversionError(f"Boundary correspondence is not monotone ({int((steps <= 0).sum())} reversals)")
    closing = np.mod(np.angle(preimages[0]) - np.angle(preimages[-1]), 2.0 * np.pi)
    winding = int(round((angles[-1] - angles[0] + closing) / (2.0 * np.pi)))
    if winding != 1:
        raise InversionError(f"Boundary correspondence winds {winding} times")
    return BoundaryCorrespondence(theta=theta, preimages=preimages, preimage_angles=angles, winding=winding)


def critical_clusters(f: MapField, mask: Optional[np.ndarray] = None) -> int:
    """Size in nodes of the largest connected cluster with nonpositive Jacobian"""
    jac = jacobian(f).values
    with np.errstate(invalid="ignore"):
        bad = np.isfinite(jac) & (jac <= 0)
    if mask is not None:
        bad &= mask
    labels, count = ndimage.label(bad)
    if count == 0:
        return 0
    return int(np.bincount(labels.ravel())[1:].max())


@dataclass(frozen=True, eq=False)
class DirichletSolution:
    f: MapField
    F: AnalyticPart
    G: Optional[MapField]
    z0: complex
    boundary_residual: float
    im_f_z0: float
    max_critical_cluster: int
    chain_rule_deviation: float
    max_interior_modulus: float
    correspondence: Optional[BoundaryCorrespondence] = None
    disk: Optional[DiskMap] = None

    def to_dict(self) -> dict:
        return {
            "z0": [self.z0.real, self.z0.imag],
            "boundary_residual": self.boundary_residual,
            "im_f_z0": self.im_f_z0,
            "max_critical_cluster": self.max_critical_cluster,
            "chain_rule_deviation": self.chain_rule_deviation,
            "max_interior_modulus": self.max_interior_modulus,
            "coefficients": len(self.F.coefficients),
            "boundary_deviation": None if self.disk is None else self.disk.boundary_deviation,
            "conjugation_point": None if self.disk is None else self.disk.conjugation_point,
            "solver": None if self.disk is None else self.disk.report.to_dict(),
        }


def _stage(name: str, func, *args, **kwargs):
    try:
        return func(*args, **kwargs)
    except StageError:
        raise
    except BlabError as exc:
        raise StageError(name, exc) from exc


def _chain_rule_deviation(f: MapField, G: MapField, F: AnalyticPart, disk: np.ndarray) -> float:
    """max |K_{mu_f} - K_{mu_G}| where F' o G stays away from zero"""
    f_z, f_zbar = wirtinger_derivatives(f)
    G_z, G_zbar = wirtinger_derivatives(G)
    mu_f = dilatation_ratio(f_z.values, f_zbar.values, 1e-12)
    mu_G = dilatation_ratio(G_z.values, G_zbar.values, 1e-12)
    inner = np.where(disk, G.values, 0.0)
    regular = disk & (np.abs(F.derivative(inner)) > CRITICAL_DERIVATIVE)
    with np.errstate(invalid="ignore"):
        regular &= np.isfinite(mu_f) & (np.abs(mu_f) < 1.0) & (np.abs(mu_G) < 1.0)
    if not regular.any():
        return 0.0
    return float(np.abs(max_dilatation(mu_f[regular]) - max_dilatation(mu_G[regular])).max())


def solve_dirichlet(
    mu: DilatationField, phi: BoundaryData, z0: complex = 0j, config: Optional[SolverConfig] = None
) -> DirichletSolution:
    """f = F o G with Re f = phi on the circle and Im f(z0) = 0"""
    spec = mu.spec
    h = spec.spacing
    nodes = spec.nodes()
    in_disk = np.abs(nodes) < 1.0
    interior = np.abs(nodes) <= 1.0 - 2.0 * h

    if phi.oscillation <= 1e-14 * max(1.0, float(np.abs(phi.values).max())):
        constant = float(phi.values[0])
        F = AnalyticPart([constant])
        f = MapField(ComplexField(spec, np.where(in_disk, constant, np.nan)))
        logger.info("Constant boundary data; f is the constant %.6g", constant)
        return DirichletSolution(
            f=f, F=F, G=None, z0=complex(z0), boundary_residual=0.0, im_f_z0=0.0,
            max_critical_cluster=0, chain_rule_deviation=0.0, max_interior_modulus=0.0,
        )

    disk = _stage("disk-homeomorphism", solve_disk_homeomorphism, mu, z0, config)
    G = disk.G
    correspondence = _stage("boundary-trace", boundary_trace, G, phi.m)
    u = BoundaryData(phi.at(correspondence.preimage_angles))
    F = _stage("schwarz", schwarz_reconstruct, u)

    g_disk = np.where(in_disk, G.values, 0.0)
    max_modulus = float(np.abs(G.values[interior]).max())
    if max_modulus >= 1.0:
        raise StageError("disk-homeomorphism", SupportError(f"|G| reaches {max_modulus:.6g} inside the disk"))
    f = MapField(ComplexField(spec, np.where(in_disk, F(g_disk), np.nan)))

    boundary_images = sample_field(G, np.exp(1j * phi.theta))
    residual = float(np.abs(F(boundary_images).real - phi.values).max())
    at_z0 = complex(sample_field(G, np.array([complex(z0)]))[0])
    im_f_z0 = float(F(at_z0).imag)
    clusters = critical_clusters(f, interior)
    chain = _chain_rule_deviation(f, G, F, interior & np.isfinite(f.values))
    logger.info("Dirichlet solution: boundary residual %.3e, Im f(z0) = %.3e", residual, im_f_z0)
    return DirichletSolution(
        f=f,
        F=F,
        G=G,
        z0=complex(z0),
        boundary_residual=residual,
        im_f_z0=im_f_z0,
        max_critical_cluster=clusters,
        chain_rule_deviation=chain,
        max_interior_modulus=max_modulus,
        correspondence=correspondence,
        disk=disk,
    )
