"""
Blab Reports - JSON records, CSV tables and rich summaries
"""

import csv
import json
import math
from dataclasses import asdict, is_dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from rich.console import Console
from rich.markup import escape
from rich.panel import Panel
from rich.table import Table

from .errors import FieldFormatError

SCHEMA = "blab-report-1"


def to_jsonable(value):
    """Plain JSON values; complex numbers become [re, im], non-finite floats become strings"""
    if isinstance(value, Enum):
        return value.value
    if is_dataclass(value) and not isinstance(value, type):
        return to_jsonable(asdict(value))
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (complex, np.complexfloating)):
        return [to_jsonable(float(value.real)), to_jsonable(float(value.imag))]
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else str(value)
    return value


def write_json(path: Path, kind: str, payload: dict) -> Path:
    record = {"schema": SCHEMA, "kind": kind, **to_jsonable(payload)}
    path = Path(path)
    path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    return path


def read_json(path: Path) -> dict:
    path = Path(path)
    try:
        record = json.loads(path.read_text())
    except FileNotFoundError:
        raise FieldFormatError("File not found", str(path)) from None
    except json.JSONDecodeError as exc:
        raise FieldFormatError(f"Invalid JSON: {exc.msg}", str(path), exc.lineno) from None
    if not isinstance(record, dict) or record.get("schema") != SCHEMA:
        raise FieldFormatError(f"Not a {SCHEMA} record", str(path))
    return record


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def _format(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, list) and len(value) == 2 and all(isinstance(v, float) for v in value):
        return f"{value[0]:.6g}{value[1]:+.6g}i"
    if isinstance(value, list) and len(value) > 6:
        return f"{len(value)} values, last {_format(value[-1])}"
    return escape(str(value))


def table(columns: Sequence[str], rows: Iterable[Sequence]) -> dict:
    return {"columns": list(columns), "rows": [list(r) for r in rows]}


def render(console: Console, record: dict) -> None:
    """Scalar fields as a key/value panel, nested records recursively, then the tables"""
    record = to_jsonable(record)
    summary = Table(show_header=False, box=None)
    summary.add_column(style="cyan")
    summary.add_column()
    nested = []
    for key in sorted(record):
        value = record[key]
        if key in ("schema", "kind", "tables"):
            continue
        if isinstance(value, dict):
            nested.append((key, value))
        else:
            summary.add_row(key, _format(value))
    console.print(Panel(summary, title=f"[bold]{record.get('kind', 'report')}[/bold]", border_style="blue"))
    for key, value in nested:
        render(console, {"kind": key, **value})
    for name, data in sorted(record.get("tables", {}).items()):
        grid = Table(title=name)
        for column in data["columns"]:
            grid.add_column(column, justify="right")
        for row in data["rows"]:
            grid.add_row(*(_format(v) for v in row))
        console.print(grid)
