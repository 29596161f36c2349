"""
Shared grids and closed-form Beltrami oracles
"""
import numpy as np
import pytest

from blab.fields import DilatationField, GridSpec


def smooth_radial_oracle(spec: GridSpec, c: float = 2.0):
    """mu with a known principal solution f = z + c P[h], h = r^2 (1 - r^2)^3 on the unit disk

    For radial h, P[h] = 2 I(r) / z and S[h] = h conj(z) / z - 2 I(r) / z^2
    with I(r) the integral of h(s) s over [0, r].
    """
    z = spec.nodes()
    r2 = np.abs(z) ** 2
    h = np.where(r2 < 1.0, r2 * (1.0 - r2) ** 3, 0.0)
    R = np.minimum(r2, 1.0)
    I = 0.5 * (1.0 / 20.0 - (1.0 - R) ** 4 / 4.0 + (1.0 - R) ** 5 / 5.0)
    S = h * np.conj(z) / z - 2.0 * I / z ** 2
    mu = c * h / (1.0 + c * S)
    f = z + c * 2.0 * I / z
    return DilatationField.from_values(spec, mu), f


def radial_stretch(spec: GridSpec, radius: float = 1.0) -> DilatationField:
    """mu = (1/3) z / conj(z) on |z| <= radius; the K = 2 stretch z |z| solves it"""
    return DilatationField.from_function(spec, lambda z: z / (3.0 * np.conj(z)), radius)


@pytest.fixture
def plane_grid():
    return GridSpec(0j, 2.0, 128)


@pytest.fixture
def wide_grid():
    return GridSpec(0j, 4.0, 128)


@pytest.fixture
def disk_grid():
    return GridSpec(0j, 1.25, 128)


@pytest.fixture
def small_grid():
    return GridSpec(0j, 2.0, 32)
