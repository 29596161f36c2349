"""
Blab Field I/O - CFLD-1 grid files and boundary CSV files

CFLD-1 is plain text: a header line "CFLD1 N L center_re center_im"
followed by N*N lines "re im" in row-major order (rows follow y).
"nan nan" marks a missing node.
"""

import csv
import io
import math
from pathlib import Path
from typing import Union

import numpy as np

from .dirichlet import BoundaryData, uniform_angles
from .errors import BlabError, FieldFormatError
from .fields import ComplexField, GridSpec, RealField

MAGIC = "CFLD1"
BOUNDARY_HEADER = ("theta", "phi")
ANGLE_TOLERANCE = 1e-9

PathLike = Union[str, Path]


def _field_of(obj) -> Union[ComplexField, RealField]:
    # MapField, DilatationField and QProfile all wrap a grid field
    return getattr(obj, "field", obj)


def write_field(path: PathLike, obj) -> Path:
    field = _field_of(obj)
    spec = field.spec
    values = np.asarray(field.values, dtype=np.complex128).ravel()
    header = f"{MAGIC} {spec.resolution} {spec.half_width!r} {spec.center.real!r} {spec.center.imag!r}"
    path = Path(path)
    np.savetxt(path, np.column_stack([values.real, values.imag]), fmt="%.17g", header=header, comments="")
    return path


def _read_header(path: Path) -> GridSpec:
    try:
        with path.open() as handle:
            first = handle.readline()
    except FileNotFoundError:
        raise FieldFormatError("File not found", str(path)) from None
    tokens = first.split()
    if len(tokens) != 5 or tokens[0] != MAGIC:
        raise FieldFormatError(f"Expected header '{MAGIC} N L center_re center_im'", str(path), 1)
    try:
        n = int(tokens[1])
        half_width, re, im = (float(t) for t in tokens[2:])
    except ValueError:
        raise FieldFormatError("Malformed header values", str(path), 1) from None
    try:
        return GridSpec(complex(re, im), half_width, n)
    except BlabError as exc:
        raise FieldFormatError(str(exc), str(path), 1) from None


def read_field(path: PathLike) -> ComplexField:
    path = Path(path)
    spec = _read_header(path)
    expected = spec.resolution ** 2
    data = []
    with path.open() as handle:
        handle.readline()
        for lineno, line in enumerate(handle, start=2):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 2:
                raise FieldFormatError(f"Expected 're im', got {len(parts)} values", str(path), lineno)
            try:
                re, im = float(parts[0]), float(parts[1])
            except ValueError:
                raise FieldFormatError(f"Not a number: {line.strip()!r}", str(path), lineno) from None
            if math.isinf(re) or math.isinf(im):
                raise FieldFormatError("Infinite sample", str(path), lineno)
            data.append(complex(re, im))
    if len(data) != expected:
        raise FieldFormatError(f"Expected {expected} samples, found {len(data)}", str(path))
    return ComplexField(spec, np.array(data))


def read_real_field(path: PathLike) -> RealField:
    field = read_field(path)
    imag = np.nan_to_num(field.values.imag)
    if np.any(imag != 0):
        raise FieldFormatError("Real field has nonzero imaginary parts", str(path))
    return RealField(field.spec, field.values.real)


def write_boundary_csv(path: PathLike, data: BoundaryData) -> Path:
    path = Path(path)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(BOUNDARY_HEADER)
        for theta, value in zip(data.theta, data.values):
            writer.writerow((repr(float(theta)), repr(float(value))))
    return path


def read_boundary_csv(path: PathLike) -> BoundaryData:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise FieldFormatError("File not found", str(path)) from None
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != BOUNDARY_HEADER:
        raise FieldFormatError("Expected header 'theta,phi'", str(path), 1)
    thetas, values = [], []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 2:
            raise FieldFormatError(f"Expected 2 columns, got {len(row)}", str(path), lineno)
        try:
            thetas.append(float(row[0]))
            values.append(float(row[1]))
        except ValueError:
            raise FieldFormatError(f"Not a number: {','.join(row)!r}", str(path), lineno) from None
    thetas = np.array(thetas)
    if thetas.size and np.any(np.diff(thetas) <= 0):
        raise FieldFormatError("theta must be strictly increasing", str(path))
    if thetas.size and (thetas[0] < 0 or thetas[-1] >= 2.0 * math.pi):
        raise FieldFormatError("theta must lie in [0, 2 pi)", str(path))
    if thetas.size and np.abs(thetas - uniform_angles(thetas.size)).max() > ANGLE_TOLERANCE:
        raise FieldFormatError("theta must be the uniform angles 2 pi j / m", str(path))
    try:
        return BoundaryData(values)
    except BlabError as exc:
        raise FieldFormatError(str(exc), str(path)) from None
