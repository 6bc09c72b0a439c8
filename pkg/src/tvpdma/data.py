"""CSV datasets, lags and design-matrix assembly.

Missing values are NaN throughout.  In CSV files an empty cell or ``NA``
marks a missing value.
"""
from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError

MISSING = {"", "NA", "NaN", "nan"}
INTERCEPT = "(Intercept)"


@dataclass
class Dataset:
    time: list
    columns: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        for name, col in self.columns.items():
            if len(col) != len(self.time):
                raise DataError(f"column {name!r} has {len(col)} rows, time index has {len(self.time)}")
        for a, b in zip(self.time, self.time[1:]):
            if not a < b:
                raise DataError(f"time index not strictly increasing at {a!r} -> {b!r}")

    def __len__(self) -> int:
        return len(self.time)

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.time), len(self.columns)

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.columns[name]
        except KeyError:
            raise DataError(f"no column named {name!r}") from None


def _parse_time(raw: list[str]) -> list:
    try:
        return [int(v) for v in raw]
    except ValueError:
        pass
    try:
        return [dt.date.fromisoformat(v) for v in raw]
    except ValueError as exc:
        raise DataError(f"time column is neither integers nor YYYY-MM-DD dates: {exc}") from None


def load_csv(path, time_column: str | None = None) -> Dataset:
    """Read a header-first numeric CSV.

    When ``time_column`` is given it becomes the index (integers or ISO
    dates); otherwise rows are numbered from 1.
    """
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    if not rows:
        raise DataError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if r]
    if len(set(header)) != len(header):
        raise DataError(f"{path}: duplicate column names in header")
    if time_column is not None and time_column not in header:
        raise DataError(f"{path}: no time column {time_column!r}")

    cols: dict[str, np.ndarray] = {}
    time_raw = []
    for name in header:
        if name != time_column:
            cols[name] = np.empty(len(body))
    for r, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DataError(f"{path}:{r}: expected {len(header)} fields, found {len(row)}")
        for name, cell in zip(header, row):
            cell = cell.strip()
            if name == time_column:
                time_raw.append(cell)
                continue
            if cell in MISSING:
                cols[name][r - 2] = np.nan
                continue
            try:
                cols[name][r - 2] = float(cell)
            except ValueError:
                raise DataError(f"{path}:{r}: column {name!r}: cannot parse {cell!r}") from None

    if time_column is None:
        time = list(range(1, len(body) + 1))
    else:
        time = _parse_time(time_raw)
        if len(set(time)) != len(time):
            raise DataError(f"{path}: duplicate timestamps in {time_column!r}")
    return Dataset(time=time, columns=cols)


def format_time(v) -> str:
    return v.isoformat() if isinstance(v, dt.date) else str(v)


def format_value(x: float) -> str:
    return "NA" if np.isnan(x) else f"{x:.17g}"


def write_csv(path, ds: Dataset, time_column: str = "time") -> None:
    names = list(ds.columns)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([time_column, *names])
        for t, tv in enumerate(ds.time):
            w.writerow([format_time(tv), *(format_value(ds.columns[c][t]) for c in names)])


def lag(series, k: int) -> np.ndarray:
    """Shift ``series`` forward by ``k`` steps, padding the front with NaN."""
    if k < 0:
        raise ConfigError(f"lag must be nonnegative, got {k}")
    x = np.asarray(series, dtype=float)
    out = np.full(x.shape, np.nan)
    if k < x.size:
        out[k:] = x[: x.size - k]
    return out


@dataclass(frozen=True)
class DesignSpec:
    response: str
    terms: tuple[tuple[str, int], ...] = ()
    intercept: bool = True

    def __post_init__(self):
        terms = tuple((str(c), int(k)) for c, k in self.terms)
        object.__setattr__(self, "terms", terms)
        if not terms and not self.intercept:
            raise ConfigError("design needs at least one term or an intercept")
        for c, k in terms:
            if k < 0:
                raise ConfigError(f"negative lag for {c!r}")
            if c == self.response and k == 0:
                raise ConfigError(f"response {c!r} cannot enter the design without a lag")

    def names(self) -> list[str]:
        out = [INTERCEPT] if self.intercept else []
        out += [c if k == 0 else f"Lag({c}, {k})" for c, k in self.terms]
        return out


@dataclass
class Design:
    y: np.ndarray
    F: np.ndarray
    names: list[str]
    offset: int
    time: list


def build_design(ds: Dataset, spec: DesignSpec) -> Design:
    """Assemble response and design, dropping the leading incomplete rows.

    Rows are dropped only from the front (where lags create gaps); a
    missing value anywhere after the first complete row is an error.
    """
    y = np.asarray(ds[spec.response], dtype=float)
    cols = []
    if spec.intercept:
        cols.append(np.ones(len(ds)))
    for c, k in spec.terms:
        cols.append(lag(ds[c], k))
    F = np.column_stack(cols) if cols else np.empty((len(ds), 0))
    names = spec.names()

    missing = np.isnan(y) | np.any(np.isnan(F), axis=1)
    complete = np.flatnonzero(~missing)
    if complete.size == 0:
        raise DataError("no complete rows after lagging")
    offset = int(complete[0])
    interior = np.flatnonzero(missing[offset:])
    if interior.size:
        r = offset + int(interior[0])
        bad = [spec.response] if np.isnan(y[r]) else []
        bad += [names[j] for j in np.flatnonzero(np.isnan(F[r]))]
        raise DataError(f"interior missing value at time {format_time(ds.time[r])} in {', '.join(bad)}")
    return Design(y=y[offset:], F=F[offset:], names=names, offset=offset, time=list(ds.time[offset:]))


def parse_terms(items: Sequence[str]) -> tuple[tuple[str, int], ...]:
    """Parse ``NAME`` or ``NAME:LAG`` strings."""
    out = []
    for item in items:
        name, _, k = item.rpartition(":") if ":" in item else (item, "", "0")
        try:
            out.append((name, int(k)))
        except ValueError:
            raise ConfigError(f"bad term {item!r}; expected NAME or NAME:LAG") from None
    return tuple(out)
