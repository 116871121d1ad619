"""File formats: CSV node/outcome tables, Esri ASCII grids, result tables."""

from __future__ import annotations

import csv
import json
import math
import warnings
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ParseError, ValidationError
from .estimator import Complete, Design, InterventionSet
from .field import OutcomePoints, RasterGrid

_HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")


def _read_csv(path):
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ParseError("empty CSV file", path)
        rows = list(reader)
    return [f.strip() for f in reader.fieldnames], rows


def _column(rows, fields, name, path, kind=float):
    if name not in fields:
        raise ValidationError(f"{path}: missing column {name!r} (have {', '.join(fields)})")
    out = []
    for k, row in enumerate(rows):
        raw = (row.get(name) or "").strip()
        try:
            out.append(kind(raw))
        except ValueError:
            raise ParseError(f"column {name!r}: cannot parse {raw!r}", path, k + 2) from None
    return np.array(out)


def read_zdata(path, x_col: str = "x", y_col: str = "y", treatment: str = "Z",
               design: Optional[Design] = None, block_col: Optional[str] = None,
               id_col: Optional[str] = None) -> InterventionSet:
    """Intervention nodes from a CSV with coordinate and treatment columns.

    The design defaults to complete randomisation with the observed number of
    treated nodes.
    """
    fields, rows = _read_csv(path)
    if len(rows) < 2:
        raise ValidationError(f"{path}: need at least two intervention nodes, found {len(rows)}")
    x = _column(rows, fields, x_col, path)
    y = _column(rows, fields, y_col, path)
    z = _column(rows, fields, treatment, path)
    bad = [k + 2 for k, v in enumerate(z) if v not in (0.0, 1.0)]
    if bad:
        raise ValidationError(f"{path}: treatment column {treatment!r} must be 0 or 1; "
                              f"offending lines {bad}")
    coords = np.column_stack([x, y])
    if not np.all(np.isfinite(coords)):
        raise ValidationError(f"{path}: non-finite coordinates")
    if len(np.unique(coords, axis=0)) < len(coords):
        warnings.warn(f"{path}: some intervention nodes share coordinates", UserWarning,
                      stacklevel=2)
    z = z.astype(np.int64)
    if design is None:
        n1 = int(z.sum())
        if not 0 < n1 < len(z):
            raise ValidationError(f"{path}: all nodes are in one arm")
        design = Complete(n1)
    blocks = None
    if block_col:
        if block_col not in fields:
            raise ValidationError(f"{path}: missing column {block_col!r}")
        blocks = np.array([row[block_col].strip() for row in rows])
    ids = None
    if id_col:
        if id_col not in fields:
            raise ValidationError(f"{path}: missing column {id_col!r}")
        ids = tuple(row[id_col] for row in rows)
    return InterventionSet(coords, z, design, ids=ids, blocks=blocks)


def read_outcome_column(path, x_col: str, y_col: str, outcome: str) -> OutcomePoints:
    """Outcome points from a CSV (Ydata, or the outcome column of Zdata)."""
    fields, rows = _read_csv(path)
    x = _column(rows, fields, x_col, path)
    y = _column(rows, fields, y_col, path)
    v = _column(rows, fields, outcome, path)
    if not np.all(np.isfinite(v)):
        raise ValidationError(f"{path}: outcome column {outcome!r} has missing values")
    return OutcomePoints(np.column_stack([x, y]), v)


def read_raster_ascii(path) -> RasterGrid:
    """Read an Esri ASCII grid.

    The file lists rows top first; the returned grid has row 0 at the bottom.
    NODATA cells become NaN. Corner registration only (``xllcorner``);
    ``xllcenter`` headers are shifted by half a cell.
    """
    path = Path(path)
    with path.open() as fh:
        lines = fh.read().splitlines()
    header = {}
    k = 0
    while k < len(lines):
        parts = lines[k].split()
        if not parts:
            k += 1
            continue
        key = parts[0].lower()
        if key[0].isalpha():
            if len(parts) != 2:
                raise ParseError(f"malformed header line {lines[k]!r}", path, k + 1)
            try:
                header[key] = float(parts[1])
            except ValueError:
                raise ParseError(f"non-numeric header value {parts[1]!r}", path, k + 1) from None
            k += 1
        else:
            break
    centred = "xllcenter" in header
    if centred:
        header["xllcorner"] = header.pop("xllcenter")
        header["yllcorner"] = header.pop("yllcenter", float("nan"))
    header.setdefault("nodata_value", -9999.0)
    for key in _HEADER_KEYS:
        if key not in header or not math.isfinite(header[key]):
            raise ParseError(f"missing or invalid header field {key!r}", path, k + 1)
    ncols, nrows = header["ncols"], header["nrows"]
    if ncols != int(ncols) or nrows != int(nrows) or ncols < 1 or nrows < 1:
        raise ParseError("ncols and nrows must be positive integers", path)
    ncols, nrows = int(ncols), int(nrows)
    cell = header["cellsize"]
    if not cell > 0:
        raise ParseError(f"cellsize must be positive, got {cell}", path)
    rows = []
    for j in range(k, len(lines)):
        parts = lines[j].split()
        if not parts:
            continue
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            raise ParseError("non-numeric cell value", path, j + 1) from None
        if len(vals) != ncols:
            raise ParseError(f"expected {ncols} values, found {len(vals)}", path, j + 1)
        rows.append(vals)
    if len(rows) != nrows:
        raise ParseError(f"expected {nrows} data rows, found {len(rows)}", path)
    values = np.array(rows[::-1], dtype=float)
    nodata = header["nodata_value"]
    values[values == nodata] = np.nan
    x0, y0 = header["xllcorner"], header["yllcorner"]
    if centred:
        x0, y0 = x0 - cell / 2.0, y0 - cell / 2.0
    return RasterGrid((x0, y0), cell, values, nodata)


def write_raster_ascii(grid: RasterGrid, path) -> None:
    """Write ``grid`` as an Esri ASCII grid (top row first)."""
    vals = grid.masked_values()
    with Path(path).open("w") as fh:
        fh.write(f"ncols {grid.ncols}\nnrows {grid.nrows}\n")
        fh.write(f"xllcorner {grid.origin[0]!r}\nyllcorner {grid.origin[1]!r}\n")
        fh.write(f"cellsize {grid.cell_size!r}\nNODATA_value {grid.nodata!r}\n")
        for row in vals[::-1]:
            fh.write(" ".join(repr(grid.nodata) if math.isnan(v) else repr(float(v)) for v in row))
            fh.write("\n")


def write_zdata(iv: InterventionSet, path, extra: Optional[dict] = None) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        cols = ["x", "y", "Z"] + list(extra or {})
        w.writerow(cols)
        for k in range(iv.n):
            row = [repr(float(iv.coords[k, 0])), repr(float(iv.coords[k, 1])), int(iv.z[k])]
            row += [repr(float(v[k])) for v in (extra or {}).values()]
            w.writerow(row)


# --------------------------------------------------------------------------
# result tables
# --------------------------------------------------------------------------

def format_number(v) -> str:
    """Full-precision, round-trippable text; ``NA`` for missing."""
    v = float(v)
    return "NA" if math.isnan(v) else repr(v)


def parse_number(text: str) -> float:
    return float("nan") if text.strip() in ("NA", "") else float(text)


def write_table_csv(columns: dict, path) -> None:
    names = list(columns)
    n = len(next(iter(columns.values())))
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for r in range(n):
            w.writerow([format_number(columns[c][r]) for c in names])


def read_table_csv(path) -> dict:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        names = next(reader)
        rows = [r for r in reader if r]
    return {name: np.array([parse_number(r[k]) for r in rows]) for k, name in enumerate(names)}


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return None if math.isnan(v) or math.isinf(v) else v
    return v


def dump_json(doc, path) -> None:
    Path(path).write_text(json.dumps(_jsonable(doc), indent=1, sort_keys=True) + "\n")


def load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", path, exc.lineno) from None


def nan_array(values) -> np.ndarray:
    """Inverse of the JSON encoding: ``None`` back to NaN."""
    return np.array([[np.nan if v is None else v for v in row] if isinstance(row, list)
                     else (np.nan if row is None else row) for row in values], dtype=float)
