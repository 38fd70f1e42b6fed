"""CSV reading and writing for datasets, simulation truth and results."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np

from .datamodel import BeliefRecord, Dataset, Design, validate_dataset
from .errors import ValidationError
from .simlab import SimTruth

__all__ = [
    "BASE_COLUMNS",
    "SchemaError",
    "dataset_header",
    "read_dataset_csv",
    "write_dataset_csv",
    "write_truth_csv",
    "format_value",
]

BASE_COLUMNS = (
    "id",
    "arm",
    "prior",
    "prior_var",
    "posterior",
    "signal",
    "signal_high",
    "signal_low",
    "outcome_pre",
    "outcome_post",
    "group",
)
_NUMERIC = {
    "prior",
    "prior_var",
    "posterior",
    "signal",
    "signal_high",
    "signal_low",
    "outcome_pre",
    "outcome_post",
}
TRUTH_COLUMNS = (
    "id",
    "tau",
    "u",
    "alpha",
    "prior_var",
    "n_signals",
    "prior",
    "signal_high",
    "signal_low",
    "x_a",
    "x_b",
    "y_a",
    "y_b",
    "treat",
)


class SchemaError(ValidationError):
    """Input file does not follow the dataset schema."""


def format_value(v) -> str:
    """Full-precision text for CSV cells; empty for missing values."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "" if math.isnan(v) else repr(v)
    return str(v)


def dataset_header(covariate_names: Sequence[str]) -> list[str]:
    return list(BASE_COLUMNS) + [f"cov_{c}" for c in covariate_names]


def _parse_number(text: str, row: int, col: str):
    text = text.strip()
    if text == "":
        return None
    try:
        return float(text)
    except ValueError:
        raise SchemaError(f"row {row}, column {col!r}: {text!r} is not a number") from None


def read_dataset(stream: TextIO, design: Design | str, source: str = "<input>") -> Dataset:
    reader = csv.reader(stream)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise SchemaError(f"{source}: empty file") from None
    for col in header:
        if col not in BASE_COLUMNS and not (col.startswith("cov_") and len(col) > 4):
            raise SchemaError(f"{source}: unknown column {col!r}")
    if len(set(header)) != len(header):
        dup = next(c for c in header if header.count(c) > 1)
        raise SchemaError(f"{source}: duplicate column {dup!r}")
    for col in ("id", "prior", "posterior", "outcome_post"):
        if col not in header:
            raise SchemaError(f"{source}: missing required column {col!r}")
    covs = [c for c in header if c.startswith("cov_")]

    records = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise SchemaError(
                f"{source}: row {lineno} has {len(row)} fields, expected {len(header)}"
            )
        cells = dict(zip(header, row))
        rec = {"id": cells["id"].strip()}
        if not rec["id"]:
            raise SchemaError(f"{source}: row {lineno}, column 'id' is empty")
        for col in header:
            if col in _NUMERIC:
                rec[col] = _parse_number(cells[col], lineno, col)
        if "arm" in cells:
            rec["arm"] = cells["arm"].strip() or None
        if "group" in cells:
            rec["group"] = cells["group"].strip() or None
        cov = {}
        for col in covs:
            v = _parse_number(cells[col], lineno, col)
            if v is None:
                raise SchemaError(f"{source}: row {lineno}, column {col!r} is empty")
            cov[col[4:]] = v
        rec["covariates"] = cov
        records.append(rec)
    try:
        return validate_dataset(records, design)
    except ValidationError as exc:
        raise SchemaError(f"{source}: {exc}") from exc


def read_dataset_csv(path: str | Path, design: Design | str) -> Dataset:
    """Read and validate a dataset CSV.

    Raises
    ------
    SchemaError
        Unknown or missing columns, malformed numbers, or records failing
        validation; the message names the row or record and the column.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        return read_dataset(fh, design, str(path))


def _write_rows(path_or_stream, header: Sequence[str], rows: Iterable[Sequence]):
    def emit(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_value(v) for v in row])

    if isinstance(path_or_stream, (str, Path)):
        with Path(path_or_stream).open("w", newline="", encoding="utf-8") as fh:
            emit(fh)
    else:
        emit(path_or_stream)


def dataset_rows(ds: Dataset):
    for rec in ds.records:
        row = [getattr(rec, c) for c in BASE_COLUMNS]
        row += [rec.covariates[c] for c in ds.covariate_names]
        yield row


def write_dataset_csv(ds: Dataset, path) -> None:
    _write_rows(path, dataset_header(ds.covariate_names), dataset_rows(ds))


def write_truth_csv(truth: SimTruth, path) -> None:
    cols = [getattr(truth, c) for c in TRUTH_COLUMNS[1:]]
    rows = ([rid] + [c[i] for c in cols] for i, rid in enumerate(truth.ids))
    _write_rows(path, TRUTH_COLUMNS, rows)


def write_table(path_or_stream, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    _write_rows(path_or_stream, header, rows)


def to_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    _write_rows(buf, header, rows)
    return buf.getvalue()
