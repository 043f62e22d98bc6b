"""Time series container and CSV ingestion."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import IngestError


@dataclass(frozen=True)
class TimeSeries:
    """Ordered real-valued observations with optional season/block labels.

    ``seasons`` assigns a label to every observation; contiguous runs of a
    common label form the blocks used by season-aware bootstrap resampling
    (e.g. one label per winter so that no resampled block splits a winter).
    """

    values: np.ndarray
    seasons: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.ndim != 1:
            raise ValueError("series values must be one-dimensional")
        if not np.all(np.isfinite(values)):
            raise ValueError("series values must be finite")
        if self.seasons is not None:
            seasons = np.asarray(self.seasons)
            if seasons.shape != values.shape:
                raise ValueError("season labels must align with values")
            object.__setattr__(self, "seasons", seasons)

    def __len__(self):
        return self.values.size

    def season_blocks(self) -> list[np.ndarray]:
        """Index arrays of contiguous equal-label runs, in temporal order."""
        if self.seasons is None:
            return [np.arange(len(self))]
        change = np.flatnonzero(self.seasons[1:] != self.seasons[:-1]) + 1
        return np.split(np.arange(len(self)), change)


def ingest_csv(path, value_column=None, date_column=None, season_column=None) -> TimeSeries:
    """Read a validated :class:`TimeSeries` from a CSV file.

    The file must contain one numeric value column (auto-detected when
    ``value_column`` is not given), an optional date column that must be
    nondecreasing, and an optional season label column.  Rows with missing
    or non-numeric values are rejected with their line numbers.
    """
    with open(path, newline="") as fh:
        raw_lines = fh.readlines()
    # provenance comments are allowed; blank rows are an error, named below
    kept = [(i + 1, line) for i, line in enumerate(raw_lines)
            if not line.lstrip().startswith("#")]
    if not kept:
        raise IngestError(f"{path}: empty or headerless CSV")
    blank = [ln for ln, line in kept[1:] if not line.strip()]
    if blank:
        raise IngestError(
            f"{path}: blank row(s) at line(s) "
            + ", ".join(str(b) for b in blank[:10]), rows=blank)
    line_numbers = [ln for ln, _ in kept[1:]]
    reader = csv.DictReader([line for _, line in kept])
    if reader.fieldnames is None:
        raise IngestError(f"{path}: empty or headerless CSV")
    fields = [name.strip() for name in reader.fieldnames]
    rows = list(reader)
    if not rows:
        raise IngestError(f"{path}: no data rows")

    if value_column is None:
        value_column = _detect_value_column(fields, rows, date_column, season_column)
    elif value_column not in fields:
        raise IngestError(f"{path}: no column named {value_column!r}")

    values = []
    bad_rows = []
    for i, row in enumerate(rows):
        raw = (row.get(value_column) or "").strip()
        try:
            values.append(float(raw))
        except ValueError:
            bad_rows.append(line_numbers[i])
    if bad_rows:
        shown = ", ".join(str(r) for r in bad_rows[:10])
        raise IngestError(
            f"{path}: non-numeric or missing values in column {value_column!r} "
            f"at line(s) {shown}",
            rows=bad_rows,
        )

    if date_column is not None:
        if date_column not in fields:
            raise IngestError(f"{path}: no column named {date_column!r}")
        dates = [row[date_column] for row in rows]
        disorder = [line_numbers[i] for i in range(1, len(dates))
                    if dates[i] < dates[i - 1]]
        if disorder:
            raise IngestError(
                f"{path}: dates out of order at line(s) "
                + ", ".join(str(r) for r in disorder[:10]),
                rows=disorder,
            )

    seasons = None
    if season_column is not None:
        if season_column not in fields:
            raise IngestError(f"{path}: no column named {season_column!r}")
        seasons = np.array([row[season_column] for row in rows])

    return TimeSeries(np.array(values), seasons=seasons)


def _detect_value_column(fields, rows, date_column, season_column):
    reserved = {date_column, season_column}
    candidates = []
    for name in fields:
        if name in reserved:
            continue
        sample = [(row.get(name) or "").strip() for row in rows[:50]]
        ok = 0
        for s in sample:
            try:
                float(s)
                ok += 1
            except ValueError:
                pass
        if sample and ok == len(sample):
            candidates.append(name)
    if len(candidates) == 1:
        return candidates[0]
    if not candidates:
        raise IngestError("could not detect a numeric value column")
    raise IngestError(
        f"ambiguous numeric columns {candidates}; pass value_column explicitly"
    )
