"""
Blab Fields - Grids, complex fields, Wirtinger calculus and chordal geometry

All other modules build on the types defined here. Fields are immutable:
their value arrays are copied on construction and marked read-only.
"""

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Tuple, Union

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .errors import DegenerateDilatationError, FieldError, GridError, PreconditionError, SupportError

logger = logging.getLogger(__name__)

MIN_RESOLUTION = 16
EXACT_DIAMETER_LIMIT = 10_000
DEFAULT_ZERO_TOLERANCE = 1e-12

Number = Union[int, float, complex]


@dataclass(frozen=True, slots=True)
class GridSpec:
    """Cell-centered square grid [center - L, center + L]^2 with N x N nodes"""

    center: complex
    half_width: float
    resolution: int

    def __post_init__(self):
        if int(self.resolution) != self.resolution or self.resolution < MIN_RESOLUTION or self.resolution % 2:
            raise GridError(f"Grid resolution must be an even integer >= {MIN_RESOLUTION}, got {self.resolution}")
        if not (math.isfinite(self.half_width) and self.half_width > 0):
            raise GridError(f"Grid half width must be positive, got {self.half_width}")
        object.__setattr__(self, "center", complex(self.center))
        object.__setattr__(self, "half_width", float(self.half_width))
        object.__setattr__(self, "resolution", int(self.resolution))

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.resolution

    @property
    def cell_area(self) -> float:
        return self.spacing ** 2

    @property
    def axis_x(self) -> np.ndarray:
        offsets = (np.arange(self.resolution) + 0.5) * self.spacing
        return self.center.real - self.half_width + offsets

    @property
    def axis_y(self) -> np.ndarray:
        offsets = (np.arange(self.resolution) + 0.5) * self.spacing
        return self.center.imag - self.half_width + offsets

    def nodes(self) -> np.ndarray:
        # row index follows y, column index follows x
        x, y = np.meshgrid(self.axis_x, self.axis_y)
        return x + 1j * y

    def radius_from_center(self) -> np.ndarray:
        return np.abs(self.nodes() - self.center)

    def fractional_index(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        points = np.asarray(points, dtype=np.complex128)
        h = self.spacing
        col = (points.real - (self.center.real - self.half_width)) / h - 0.5
        row = (points.imag - (self.center.imag - self.half_width)) / h - 0.5
        return row, col

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.complex128)
        offset = points - self.center
        return (np.abs(offset.real) <= self.half_width) & (np.abs(offset.imag) <= self.half_width)

    def interior_mask(self, margin: int = 1) -> np.ndarray:
        mask = np.zeros((self.resolution, self.resolution), dtype=bool)
        mask[margin:self.resolution - margin, margin:self.resolution - margin] = True
        return mask

    def disk_mask(self, center: complex, radius: float) -> np.ndarray:
        return np.abs(self.nodes() - center) < radius

    def grown(self, half_width: float) -> "GridSpec":
        """Concentric grid with the same spacing and at least the given half width"""
        h = self.spacing
        extra = max(0, math.ceil((half_width - self.half_width) / h))
        n = self.resolution + 2 * extra
        return GridSpec(self.center, n * h / 2.0, n)


@dataclass(frozen=True, eq=False)
class _GridField:
    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        n = self.spec.resolution
        values = np.array(self.values, dtype=self._dtype)
        if values.size != n * n:
            raise FieldError(f"Field has {values.size} samples, grid needs {n * n}")
        values = values.reshape(n, n)
        if np.isinf(values).any():
            raise FieldError("Field contains infinite samples")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def missing(self) -> np.ndarray:
        """NaN samples mark nodes that could not be computed"""
        return np.isnan(self.values)

    def max_modulus(self) -> float:
        if self.missing.all():
            return 0.0
        return float(np.nanmax(np.abs(self.values)))

    def with_values(self, values: np.ndarray):
        return type(self)(self.spec, values)

    @classmethod
    def zeros(cls, spec: GridSpec):
        return cls(spec, np.zeros((spec.resolution, spec.resolution)))

    @classmethod
    def from_function(cls, spec: GridSpec, func):
        return cls(spec, func(spec.nodes()))


@dataclass(frozen=True, eq=False)
class ComplexField(_GridField):
    _dtype = np.complex128


@dataclass(frozen=True, eq=False)
class RealField(_GridField):
    _dtype = np.float64


def support_radius(values: np.ndarray, spec: GridSpec) -> float:
    """Radius about the grid center of the smallest disk holding every nonzero node"""
    nonzero = np.asarray(values) != 0
    if not nonzero.any():
        return spec.spacing
    return float(spec.radius_from_center()[nonzero].max())


@dataclass(frozen=True, eq=False)
class DilatationField:
    """Compactly supported Beltrami coefficient with sup |mu| <= k_max < 1"""

    field: ComplexField
    support_radius: float
    k_max: Optional[float] = None

    def __post_init__(self):
        values = self.field.values
        if self.field.missing.any():
            raise FieldError("Dilatation contains missing samples")
        modulus = np.abs(values)
        measured = float(modulus.max())
        k_max = measured if self.k_max is None else float(self.k_max)
        if k_max >= 1.0:
            raise DegenerateDilatationError(f"Dilatation bound k_max = {k_max:.6g} is not below 1")
        if measured > k_max + 1e-15:
            raise FieldError(f"Dilatation reaches {measured:.6g}, above its declared k_max {k_max:.6g}")
        if not self.support_radius > 0:
            raise SupportError(f"Support radius must be positive, got {self.support_radius}")
        outside = self.field.spec.radius_from_center() > self.support_radius
        if np.any(values[outside] != 0):
            raise SupportError(f"Dilatation is nonzero outside its support radius {self.support_radius:.6g}")
        object.__setattr__(self, "k_max", k_max)
        object.__setattr__(self, "support_radius", float(self.support_radius))

    @property
    def spec(self) -> GridSpec:
        return self.field.spec

    @property
    def values(self) -> np.ndarray:
        return self.field.values

    @classmethod
    def from_values(cls, spec: GridSpec, values: np.ndarray, radius: Optional[float] = None) -> "DilatationField":
        values = np.asarray(values, dtype=np.complex128)
        if radius is None:
            radius = support_radius(values, spec)
        return cls(ComplexField(spec, values), radius)

    @classmethod
    def from_function(cls, spec: GridSpec, func, radius: float) -> "DilatationField":
        nodes = spec.nodes()
        values = np.where(np.abs(nodes - spec.center) <= radius, func(nodes), 0.0)
        return cls(ComplexField(spec, values), radius)

    def clearance_cells(self) -> int:
        """Number of all-zero rings between the support and the grid edge"""
        nonzero = self.values != 0
        if not nonzero.any():
            return self.spec.resolution // 2
        rows = np.flatnonzero(nonzero.any(axis=1))
        cols = np.flatnonzero(nonzero.any(axis=0))
        n = self.spec.resolution
        return int(min(rows[0], cols[0], n - 1 - rows[-1], n - 1 - cols[-1]))


@dataclass(frozen=True, eq=False)
class MapField:
    """Grid samples of a candidate solution f"""

    field: ComplexField
    is_hydrodynamic: bool = False
    support_radius: Optional[float] = None

    @property
    def spec(self) -> GridSpec:
        return self.field.spec

    @property
    def values(self) -> np.ndarray:
        return self.field.values

    @classmethod
    def from_function(cls, spec: GridSpec, func, **kwargs) -> "MapField":
        return cls(ComplexField.from_function(spec, func), **kwargs)

    @classmethod
    def identity(cls, spec: GridSpec) -> "MapField":
        return cls(ComplexField(spec, spec.nodes()), is_hydrodynamic=True, support_radius=spec.spacing)

    @property
    def tail_residual(self) -> Optional[float]:
        """sup |f(z) - z| over |z| >= 2 r_supp, for maps claiming the hydrodynamic tail"""
        if not self.is_hydrodynamic or self.support_radius is None:
            return None
        nodes = self.spec.nodes()
        far = np.abs(nodes) >= 2.0 * self.support_radius
        residual = np.abs(self.values - nodes)[far & ~self.field.missing]
        return float(residual.max()) if residual.size else 0.0

    def is_injective_proxy(self, tolerance: Optional[float] = None) -> bool:
        values = self.values[~self.field.missing]
        if tolerance is None:
            tolerance = 1e-6 * self.spec.spacing
        tree = cKDTree(np.column_stack([values.real, values.imag]))
        return not tree.query_pairs(tolerance)


@dataclass(frozen=True, slots=True)
class ExtendedPoint:
    """A point of the extended plane; value None stands for infinity"""

    value: Optional[complex] = None

    @classmethod
    def infinity(cls) -> "ExtendedPoint":
        return cls(None)

    @classmethod
    def finite(cls, z: Number) -> "ExtendedPoint":
        return cls(complex(z))

    @property
    def is_infinite(self) -> bool:
        return self.value is None


PointLike = Union[ExtendedPoint, Number]


def _as_point(p: PointLike) -> ExtendedPoint:
    if isinstance(p, ExtendedPoint):
        return p
    if isinstance(p, float) and math.isinf(p):
        return ExtendedPoint.infinity()
    return ExtendedPoint.finite(p)


def chordal_distance(x: PointLike, y: PointLike) -> float:
    x, y = _as_point(x), _as_point(y)
    if x.is_infinite and y.is_infinite:
        return 0.0
    if x.is_infinite:
        x, y = y, x
    if y.is_infinite:
        return 1.0 / math.sqrt(1.0 + abs(x.value) ** 2)
    return abs(x.value - y.value) / (math.sqrt(1.0 + abs(x.value) ** 2) * math.sqrt(1.0 + abs(y.value) ** 2))


def chordal_distance_array(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise chordal distance of finite complex arrays"""
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    return np.abs(a - b) / (np.sqrt(1.0 + np.abs(a) ** 2) * np.sqrt(1.0 + np.abs(b) ** 2))


def _sphere_embedding(points: Iterable[PointLike]) -> np.ndarray:
    rows = []
    for p in points:
        p = _as_point(p)
        if p.is_infinite:
            rows.append((0.0, 0.0, 1.0))
            continue
        z = p.value
        r2 = abs(z) ** 2
        rows.append((2.0 * z.real / (1.0 + r2), 2.0 * z.imag / (1.0 + r2), (r2 - 1.0) / (r2 + 1.0)))
    return np.array(rows, dtype=np.float64).reshape(-1, 3)


def chordal_diameter(points: Iterable[PointLike], block: int = 512) -> float:
    """Largest pairwise chordal distance; half the Euclidean diameter on the unit sphere"""
    embedded = _sphere_embedding(points)
    if embedded.shape[0] == 0:
        raise PreconditionError("Chordal diameter of an empty set is undefined")
    if embedded.shape[0] > EXACT_DIAMETER_LIMIT:
        stride = math.ceil(embedded.shape[0] / EXACT_DIAMETER_LIMIT)
        logger.debug("Subsampling %d points with stride %d", embedded.shape[0], stride)
        embedded = embedded[::stride]
    best = 0.0
    for start in range(0, embedded.shape[0], block):
        best = max(best, float(cdist(embedded[start:start + block], embedded[start:]).max()))
    return 0.5 * best


def wirtinger_derivatives(f: Union[MapField, ComplexField]) -> Tuple[ComplexField, ComplexField]:
    """(f_z, f_zbar) from second-order differences, one-sided on the boundary"""
    spec = f.spec
    d_dy, d_dx = np.gradient(f.values, spec.spacing, edge_order=2)
    f_z = 0.5 * (d_dx - 1j * d_dy)
    f_zbar = 0.5 * (d_dx + 1j * d_dy)
    return ComplexField(spec, f_z), ComplexField(spec, f_zbar)


def jacobian(f: Union[MapField, ComplexField]) -> RealField:
    f_z, f_zbar = wirtinger_derivatives(f)
    return RealField(f_z.spec, np.abs(f_z.values) ** 2 - np.abs(f_zbar.values) ** 2)


def dilatation_ratio(f_z: np.ndarray, f_zbar: np.ndarray, zero_tolerance: float) -> np.ndarray:
    """f_zbar / f_z where |f_z| exceeds the tolerance, zero elsewhere, NaN where inputs are missing"""
    mu = np.zeros(np.shape(f_z), dtype=np.complex128)
    with np.errstate(invalid="ignore"):
        regular = np.abs(f_z) > zero_tolerance
    mu[regular] = f_zbar[regular] / f_z[regular]
    mu[np.isnan(f_z) | np.isnan(f_zbar)] = np.nan
    return mu


def complex_dilatation(f: Union[MapField, ComplexField], zero_tolerance: Optional[float] = None) -> DilatationField:
    f_z, f_zbar = wirtinger_derivatives(f)
    if zero_tolerance is None:
        scale = f_z.max_modulus()
        zero_tolerance = DEFAULT_ZERO_TOLERANCE * scale if scale > 0 else np.finfo(float).tiny
    elif zero_tolerance <= 0:
        raise PreconditionError(f"zero_tolerance must be positive, got {zero_tolerance}")
    mu = dilatation_ratio(f_z.values, f_zbar.values, zero_tolerance)
    if np.isnan(mu).any():
        raise FieldError("Cannot take the dilatation of a map with missing nodes")
    modulus = np.abs(mu)
    # f_z vanishing under a nonzero f_zbar means |mu| is infinite there
    degenerate = (modulus >= 1.0) | ((np.abs(f_z.values) <= zero_tolerance) & (np.abs(f_zbar.values) > zero_tolerance))
    if degenerate.any():
        positive = np.abs(f_z.values) ** 2 - np.abs(f_zbar.values) ** 2 > 0
        inconsistent = int((degenerate & positive).sum())
        raise DegenerateDilatationError(
            f"|mu| >= 1 at {int(degenerate.sum())} nodes"
            + (f", {inconsistent} of them with positive Jacobian (inconsistent samples)" if inconsistent else "")
        )
    return DilatationField(ComplexField(f_z.spec, mu), support_radius(mu, f_z.spec), k_max=float(modulus.max()))


def max_dilatation(mu_value):
    """K = (1 + |mu|) / (1 - |mu|) for a scalar or an array of coefficients"""
    modulus = np.abs(np.asarray(mu_value, dtype=np.complex128))
    if np.any(modulus >= 1.0):
        raise DegenerateDilatationError("Maximal dilatation is unbounded for |mu| >= 1")
    k = (1.0 + modulus) / (1.0 - modulus)
    if k.ndim == 0:
        return float(k)
    return k


def sample_field(f: Union[_GridField, MapField, DilatationField], points: np.ndarray) -> np.ndarray:
    """Bilinear samples at arbitrary points; NaN outside the grid square"""
    if isinstance(f, (MapField, DilatationField)):
        f = f.field
    points = np.asarray(points, dtype=np.complex128)
    row, col = f.spec.fractional_index(points.ravel())
    coords = np.vstack([row, col])
    values = f.values
    if np.iscomplexobj(values):
        out = ndimage.map_coordinates(values.real, coords, order=1, mode="nearest") + 1j * ndimage.map_coordinates(
            values.imag, coords, order=1, mode="nearest"
        )
    else:
        out = ndimage.map_coordinates(values, coords, order=1, mode="nearest").astype(np.float64)
    out[~f.spec.contains(points.ravel())] = np.nan
    return out.reshape(points.shape)
