"""Typed access to the experiment-harness CSV files.

The harness writes ``# key=value`` metadata lines, one header row, then data
rows with a fixed column set.  Numeric cells may be empty (no closed-form
cost, or a column that the experiment kind does not measure); those come back
as None.
"""

import csv

COLUMNS = (
    "run_id", "scheme", "seed", "N_t", "K", "S", "p", "snr_db",
    "iter", "nmse", "resid", "flops_measured", "flops_analytic", "sum_rate",
)

_INT_FIELDS = ("seed", "N_t", "K", "S", "iter")
_FLOAT_FIELDS = ("p", "snr_db")
_OPTIONAL_FIELDS = ("nmse", "resid", "flops_measured", "flops_analytic", "sum_rate")


class CsvFormatError(ValueError):
    """Input file does not follow the harness CSV contract."""


def read_rows(path):
    """Parse one harness CSV into (meta_lines, rows).

    ``rows`` is a list of dicts keyed by column name with typed values.
    Raises CsvFormatError with a file/line diagnostic for a wrong header,
    an unparsable cell, or a file with no data rows.
    """
    meta = []
    data_lines = []
    line_numbers = []
    try:
        with open(path, newline="") as fh:
            for ln_no, raw in enumerate(fh, 1):
                if raw.startswith("#"):
                    meta.append(raw[1:].strip())
                elif raw.strip():
                    data_lines.append(raw)
                    line_numbers.append(ln_no)
    except OSError as exc:
        raise CsvFormatError(f"{path}: cannot read: {exc}") from exc
    if not data_lines:
        raise CsvFormatError(f"{path}: no header row")
    header = next(csv.reader([data_lines[0]]))
    if tuple(header) != COLUMNS:
        raise CsvFormatError(
            f"{path}: line {line_numbers[0]}: header {header!r} does not match "
            f"the harness schema {list(COLUMNS)!r}")
    rows = []
    for ln_no, record in zip(line_numbers[1:], csv.reader(data_lines[1:])):
        if len(record) != len(COLUMNS):
            raise CsvFormatError(
                f"{path}: line {ln_no}: expected {len(COLUMNS)} cells, got {len(record)}")
        row = dict(zip(COLUMNS, record))
        try:
            for name in _INT_FIELDS:
                row[name] = int(row[name])
            for name in _FLOAT_FIELDS:
                row[name] = float(row[name])
            for name in _OPTIONAL_FIELDS:
                row[name] = float(row[name]) if row[name] != "" else None
        except ValueError as exc:
            raise CsvFormatError(f"{path}: line {ln_no}: {exc}") from None
        rows.append(row)
    if not rows:
        raise CsvFormatError(f"{path}: no data rows")
    return meta, rows
