"""CSV reading and writing for simulated series."""

from __future__ import annotations

import csv

import numpy as np


def write_csv(path, columns: dict, index_name: str = "t") -> None:
    """Comma-separated, header row, LF endings, shortest round-trip floats."""
    names = list(columns)
    text_cols = [list(map(repr, np.asarray(columns[c]).tolist())) for c in names]
    n = len(text_cols[0]) if text_cols else 0
    rows = map(",".join, zip(map(str, range(n)), *text_cols))
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join([index_name] + names) + "\n")
        for line in rows:
            fh.write(line)
            fh.write("\n")


def read_column(path, column: str) -> np.ndarray:
    """One numeric column of a CSV file with a header row."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if column not in header:
            raise ValueError(f"{path}: no column {column!r} (have {', '.join(header)})")
        idx = header.index(column)
        return np.array([float(row[idx]) for row in reader if row])
