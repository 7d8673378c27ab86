"""Chart rendering for the precoder experiment CSVs."""

from .figures import KINDS, SCHEME_STYLES, STYLE, FigureSpec, render
from .reader import COLUMNS, CsvFormatError, read_rows

__all__ = [
    "COLUMNS",
    "CsvFormatError",
    "FigureSpec",
    "KINDS",
    "SCHEME_STYLES",
    "STYLE",
    "read_rows",
    "render",
]
