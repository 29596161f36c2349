"""
Blab Transforms - Discrete Cauchy and Beurling transforms on compactly supported fields
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import fft

from .errors import GridError, PreconditionError, SupportError
from .fields import ComplexField, GridSpec

logger = logging.getLogger(__name__)

BOUNDARY_CLEARANCE = 2


def _corner_sum(antiderivative, x1, x2, y1, y2) -> np.ndarray:
    return antiderivative(x2, y2) - antiderivative(x1, y2) - antiderivative(x2, y1) + antiderivative(x1, y1)


def _real_antiderivative(x, y):
    # mixed second derivative is x / (x^2 + y^2)
    return 0.5 * y * np.log(x * x + y * y) + x * np.arctan(y / x)


def _imag_antiderivative(x, y):
    # mixed second derivative is y / (x^2 + y^2)
    return 0.5 * x * np.log(x * x + y * y) + y * np.arctan(x / y)


def cauchy_cell_kernel(spacing: float, size: int) -> np.ndarray:
    """(1/pi) * integral of 1/w over each cell, laid out in FFT offset order

    Cell edges sit at half-integer multiples of the spacing, so no corner
    touches the origin and the closed-form antiderivatives stay finite.
    """
    offsets = fft.fftfreq(size, d=1.0 / size) * spacing
    dx = offsets[np.newaxis, :]
    dy = offsets[:, np.newaxis]
    half = 0.5 * spacing
    x1, x2, y1, y2 = dx - half, dx + half, dy - half, dy + half
    real = _corner_sum(_real_antiderivative, x1, x2, y1, y2)
    imag = _corner_sum(_imag_antiderivative, x1, x2, y1, y2)
    kernel = (real - 1j * imag) / np.pi
    kernel[0, 0] = 0.0
    return kernel


def beurling_multiplier(size: int) -> np.ndarray:
    freq = fft.fftfreq(size)
    xi = freq[np.newaxis, :] + 1j * freq[:, np.newaxis]
    multiplier = np.zeros((size, size), dtype=np.complex128)
    nonzero = xi != 0
    multiplier[nonzero] = np.conj(xi[nonzero]) / xi[nonzero]
    return multiplier


@dataclass(frozen=True, eq=False)
class TransformPlan:
    """Zero-padded FFT plan shared by every transform on one grid"""

    spec: GridSpec
    pad_factor: int = 2

    def __post_init__(self):
        if int(self.pad_factor) != self.pad_factor or self.pad_factor < 2:
            raise PreconditionError(f"pad_factor must be an integer >= 2, got {self.pad_factor}")
        size = int(self.pad_factor) * self.spec.resolution
        if size % 2:
            raise PreconditionError(f"Padded size {size} must be even")
        object.__setattr__(self, "pad_factor", int(self.pad_factor))
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "_cauchy_spectrum", fft.fft2(cauchy_cell_kernel(self.spec.spacing, size)))
        object.__setattr__(self, "_beurling_multiplier", beurling_multiplier(size))
        logger.debug("Transform plan ready: N=%d padded to %d", self.spec.resolution, size)

    def _padded_spectrum(self, values: np.ndarray) -> np.ndarray:
        n = self.spec.resolution
        padded = np.zeros((self.size, self.size), dtype=np.complex128)
        padded[:n, :n] = values
        return fft.fft2(padded)

    def _crop(self, spectrum: np.ndarray) -> np.ndarray:
        n = self.spec.resolution
        return fft.ifft2(spectrum)[:n, :n]

    def cauchy_values(self, values: np.ndarray) -> np.ndarray:
        return self._crop(self._padded_spectrum(values) * self._cauchy_spectrum)

    def beurling_values(self, values: np.ndarray) -> np.ndarray:
        return self._crop(self._padded_spectrum(values) * self._beurling_multiplier)


def check_supported(values: np.ndarray, spec: GridSpec, clearance: int = BOUNDARY_CLEARANCE) -> None:
    n = spec.resolution
    ring = np.ones((n, n), dtype=bool)
    ring[clearance:n - clearance, clearance:n - clearance] = False
    if np.any(values[ring] != 0):
        raise SupportError(f"Field support comes within {clearance} cells of the grid boundary (aliasing)")


def _prepare(h: ComplexField, plan: TransformPlan) -> np.ndarray:
    if h.spec != plan.spec:
        raise GridError("Field grid does not match the transform plan")
    if h.missing.any():
        raise PreconditionError("Cannot transform a field with missing nodes")
    check_supported(h.values, h.spec)
    return h.values


def cauchy_transform(h: ComplexField, plan: TransformPlan) -> ComplexField:
    """P[h](z) = -(1/pi) * integral of h(zeta) / (zeta - z); its zbar-derivative is h"""
    return ComplexField(h.spec, plan.cauchy_values(_prepare(h, plan)))


def beurling_transform(h: ComplexField, plan: TransformPlan) -> ComplexField:
    """S[h] through the Fourier multiplier conj(xi)/xi, zero at the zero frequency"""
    return ComplexField(h.spec, plan.beurling_values(_prepare(h, plan)))


def l2_norm(values: np.ndarray, spec: GridSpec) -> float:
    return float(np.sqrt(np.sum(np.abs(values) ** 2) * spec.cell_area))
