"""Point files, control-point files, convergence traces and JSON reports."""

import csv
import json
import logging
import os
from typing import Iterable, List, Sequence

import numpy as np

from .errors import ParseError
from .fitting import DataSet

logger = logging.getLogger(__name__)

COORD_COLUMNS = ('x', 'y', 'z')
PARAM_COLUMNS = ('u', 'v', 'w')
TRACE_COLUMNS = ('iter', 'residual_norm', 'delta_norm', 'wall_ms')
FORMATS = ('csv', 'xyz')


def format_float(value: float) -> str:
    """Shortest text that reproduces a double exactly (17 significant digits)."""
    return format(float(value), '.17g')


def _split_header(fields: Sequence[str], line: int = 1):
    names = [f.strip().lower() for f in fields]
    n_coords = 0
    while n_coords < len(names) and n_coords < 3 and names[n_coords] == COORD_COLUMNS[n_coords]:
        n_coords += 1
    rest = names[n_coords:]
    if n_coords == 0 or len(rest) > 3 or rest != list(PARAM_COLUMNS[:len(rest)]):
        raise ParseError(
            f"header must be x[,y[,z]] followed by optional u[,v[,w]], got {','.join(fields)}", line=line
        )
    return n_coords, len(rest)


def _parse_row(fields: Sequence[str], expected: int, line: int) -> List[float]:
    if len(fields) != expected:
        raise ParseError(f"expected {expected} fields, got {len(fields)}", line=line)
    try:
        values = [float(f) for f in fields]
    except ValueError:
        raise ParseError(f"non-numeric value in row: {','.join(fields)}", line=line)
    if not all(np.isfinite(values)):
        raise ParseError("non-finite value in row", line=line)
    return values


def _read_csv(path: str):
    with open(path, 'r', newline='') as f:
        rows = [(i, r) for i, r in enumerate(csv.reader(f), start=1) if any(c.strip() for c in r)]
    if not rows:
        raise ParseError("file is empty", line=1)
    header_line, header = rows[0]
    n_coords, n_params = _split_header(header, header_line)
    values = [_parse_row(r, n_coords + n_params, i) for i, r in rows[1:]]
    if not values:
        raise ParseError("no data rows after the header", line=header_line + 1)
    return np.array(values), n_coords, n_params


def _read_xyz(path: str):
    values = []
    width = None
    with open(path, 'r') as f:
        for i, raw in enumerate(f, start=1):
            text = raw.split('#', 1)[0].strip()
            if not text:
                continue
            fields = text.split()
            if width is None:
                width = len(fields)
                if not 3 <= width <= 6:
                    raise ParseError(f"xyz rows need 3 coordinates and up to 3 parameters, got {width} fields", line=i)
            values.append(_parse_row(fields, width, i))
    if not values:
        raise ParseError("file is empty", line=1)
    return np.array(values), 3, width - 3


def load_points(path: str, format: str = 'csv') -> DataSet:
    """
    Load data points, with parameters if the file carries them.

    CSV files have a header naming the columns x[,y[,z]] then optional u[,v[,w]].
    xyz files are whitespace separated without a header: three coordinates, then
    up to three parameters; '#' starts a comment.

    Args:
        path: Path to the point file
        format: 'csv' or 'xyz'

    Returns:
        DataSet

    Raises:
        ParseError: Malformed header or row, or no data rows
        OSError: If the file cannot be read
    """
    if format not in FORMATS:
        raise ValueError(f"unknown point format '{format}', expected one of {FORMATS}")
    if format == 'csv':
        table, n_coords, n_params = _read_csv(path)
    else:
        table, n_coords, n_params = _read_xyz(path)

    points = table[:, :n_coords]
    params = table[:, n_coords:] if n_params else None
    logger.info(
        f"Loaded {len(points)} points from {path} ({n_coords} coordinates"
        + (f", {n_params} parameters)" if n_params else ", no parameters)")
    )
    return DataSet(points, params)


def write_points(path: str, data: DataSet) -> None:
    """Write a data set as CSV with full precision."""
    header = list(COORD_COLUMNS[:data.point_dim])
    table = data.points
    if data.has_params:
        header += PARAM_COLUMNS[:data.params.shape[1]]
        table = np.hstack([data.points, data.params])
    _write_table(path, header, table)
    logger.debug(f"Wrote {data.size} points to {path}")


def write_control_points(path: str, P: np.ndarray) -> None:
    """Write the control matrix as CSV, one control point per row in flat-index order."""
    P = np.asarray(P, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    _write_table(path, ['index'] + list(COORD_COLUMNS[:P.shape[1]]), P, index=True)
    logger.info(f"Wrote {P.shape[0]} control points to {path}")


def load_control_points(path: str) -> np.ndarray:
    """
    Read a control matrix written by write_control_points.

    Raises:
        ParseError: If a row is malformed or indices are out of order
    """
    with open(path, 'r', newline='') as f:
        rows = [(i, r) for i, r in enumerate(csv.reader(f), start=1) if r]
    if not rows:
        raise ParseError("file is empty", line=1)
    header = [h.strip() for h in rows[0][1]]
    if len(header) < 2 or header[0] != 'index' or header[1:] != list(COORD_COLUMNS[:len(header) - 1]):
        raise ParseError(f"unexpected control-point header {','.join(header)}", line=1)
    out = []
    for expected_index, (i, row) in enumerate(rows[1:]):
        values = _parse_row(row, len(header), i)
        if int(values[0]) != expected_index:
            raise ParseError(f"expected index {expected_index}, got {row[0]}", line=i)
        out.append(values[1:])
    if not out:
        raise ParseError("no control points after the header", line=2)
    return np.array(out)


def _write_table(path: str, header: Sequence[str], table: np.ndarray, index: bool = False) -> None:
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        for j, row in enumerate(table):
            cells = [format_float(x) for x in row]
            writer.writerow(([str(j)] if index else []) + cells)


def write_trace(path: str, trace: Iterable) -> None:
    """
    Write the convergence trace as CSV: iter, residual_norm, delta_norm, wall_ms.

    wall_ms is left empty for records taken without timing.
    """
    count = 0
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(TRACE_COLUMNS)
        for record in trace:
            wall = '' if record.wall_ms is None else f"{record.wall_ms:.3f}"
            writer.writerow([record.k, format_float(record.residual_norm), format_float(record.delta_norm), wall])
            count += 1
    logger.info(f"Wrote {count} trace rows to {path}")


def _write_json(path: str, doc: dict) -> None:
    with open(path, 'w') as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write('\n')


def write_summary(path: str, summary: dict) -> None:
    """Write the fit summary as JSON."""
    _write_json(path, summary)
    logger.info(f"Wrote summary to {path}")


def write_report(path: str, report: dict) -> None:
    """Write a diagnostics report as JSON."""
    _write_json(path, report)
    logger.info(f"Wrote diagnostics report to {path}")


def output_path(prefix: str, suffix: str) -> str:
    """Artifact path for an output prefix, e.g. ('out/run', 'trace.csv') -> 'out/run.trace.csv'."""
    return f"{os.path.expanduser(prefix)}.{suffix}"
