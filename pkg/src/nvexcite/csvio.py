"""CSV ingestion by header name, CSV emission, and report serialisation."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np


class CsvFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Schema:
    required: tuple[str, ...]
    optional: tuple[str, ...] = ()


@dataclass
class Table:
    columns: dict
    warnings: list = field(default_factory=list)

    def __getitem__(self, name):
        return self.columns[name]

    def __contains__(self, name):
        return name in self.columns

    def __len__(self):
        return len(next(iter(self.columns.values()))) if self.columns else 0


KNIFE_EDGE = Schema(("x_um", "power_uW"), ("z_um",))
CAUSTIC = Schema(("z_um", "w_um"), ("w_err_um",))
TIMESTAMPS = Schema(("t_ns",))
SATURATION = Schema(("power_uW", "counts_per_s"))
POLARIZATION = Schema(("angle_deg", "counts_per_s"))
SPECTRUM = Schema(("wavelength_nm", "intensity"))
PULSE = Schema(("t_ns", "intensity"))
ODMR = Schema(("freq_mhz", "fluorescence"))


def parse_csv(path, schema: Schema) -> Table:
    """Read the schema's columns (matched by header name) as float arrays.

    Blank lines and lines starting with ``#`` are skipped.  Unknown columns
    are dropped with a warning.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header = None
    data = []
    for lineno, row in enumerate(rows, start=1):
        if not row or all(not c.strip() for c in row) or row[0].lstrip().startswith("#"):
            continue
        if header is None:
            header = [c.strip() for c in row]
            header_line = lineno
            continue
        data.append((lineno, row))
    if header is None:
        raise CsvFormatError(f"{path}: no header row")
    seen = set()
    for name in header:
        if name in seen:
            raise CsvFormatError(f"{path}:{header_line}: duplicate column {name!r}")
        seen.add(name)
    for name in schema.required:
        if name not in seen:
            raise CsvFormatError(f"{path}:{header_line}: missing required column {name!r}")
    wanted = [n for n in header if n in schema.required or n in schema.optional]
    warnings = [f"{path}: ignoring unknown column {n!r}" for n in header if n not in wanted]
    index = {n: header.index(n) for n in wanted}
    cols = {n: [] for n in wanted}
    for lineno, row in data:
        if len(row) != len(header):
            raise CsvFormatError(f"{path}:{lineno}: expected {len(header)} fields, found {len(row)}")
        for n, i in index.items():
            cell = row[i].strip()
            try:
                value = float(cell)
            except ValueError:
                raise CsvFormatError(f"{path}:{lineno}: column {n!r}: non-numeric value {cell!r}") from None
            if not math.isfinite(value):
                raise CsvFormatError(f"{path}:{lineno}: column {n!r}: non-finite value {cell!r}")
            cols[n].append(value)
    if not data:
        raise CsvFormatError(f"{path}: no data rows")
    return Table({n: np.asarray(v, dtype=float) for n, v in cols.items()}, warnings)


def format_number(v) -> str:
    return repr(float(v))


def write_csv(fh, header: Sequence[str], columns: Iterable[Sequence[float]]):
    """Write columns under ``header``; floats use ``repr`` so they round-trip exactly."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(header)
    for row in zip(*columns):
        writer.writerow([format_number(v) for v in row])


def file_digest(paths: Sequence) -> str:
    h = hashlib.sha256()
    for p in paths:
        with open(p, "rb") as fh:
            h.update(hashlib.sha256(fh.read()).digest())
    return h.hexdigest()


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, Mapping):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        if math.isfinite(f):
            return f
        return "nan" if math.isnan(f) else ("inf" if f > 0 else "-inf")
    return obj


def _flatten(obj, prefix=""):
    if isinstance(obj, dict):
        for k in sorted(obj):
            yield from _flatten(obj[k], f"{prefix}.{k}" if prefix else k)
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            yield from _flatten(v, f"{prefix}[{i}]")
    else:
        yield prefix, obj


def serialize_report(report: dict, fmt: str = "json") -> str:
    clean = _clean(report)
    if fmt == "json":
        return json.dumps(clean, sort_keys=True, indent=2, allow_nan=False) + "\n"
    if fmt == "flat":
        lines = []
        for key, value in _flatten(clean):
            text = json.dumps(value) if isinstance(value, (bool, str)) or value is None else repr(value)
            lines.append(f"{key}={text}")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")
