"""Delimited table loading, column kind inference and target preparation."""

from __future__ import annotations

import csv
import enum
import io
import math
import statistics
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

LOW_CARD_MAX = 10
MID_CARD_MAX = 30
PARSE_RATE = 0.99

_DATETIME_FORMATS = (
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%dT%H:%M:%SZ",
    "%Y-%m-%d %H:%M:%S.%f",
    "%Y-%m-%dT%H:%M:%S.%f",
    "%Y-%m-%d",
    "%Y/%m/%d",
    "%Y/%m/%d %H:%M:%S",
    "%m/%d/%Y",
    "%m/%d/%Y %H:%M",
    "%m/%d/%Y %H:%M:%S",
    "%d.%m.%Y",
)


class TableError(ValueError):
    pass


class ColumnKind(str, enum.Enum):
    NUMERIC = "Numeric"
    DATETIME = "Datetime"
    LOW_CARD = "LowCardCategorical"
    MID_CARD = "MidCardCategorical"
    TEXT = "Text"


@dataclass(frozen=True)
class Table:
    """Immutable column store of raw string cells."""

    name: str
    headers: tuple[str, ...]
    columns: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        if len(self.headers) != len(self.columns):
            raise TableError("headers and columns differ in length")
        if len(set(self.headers)) != len(self.headers):
            raise TableError("duplicate headers")
        lengths = {len(c) for c in self.columns}
        if len(lengths) > 1:
            raise TableError("columns differ in length")

    @classmethod
    def from_columns(cls, name: str, data: dict[str, Sequence[str]]) -> "Table":
        return cls(
            name,
            tuple(data),
            tuple(tuple("" if v is None else str(v) for v in col) for col in data.values()),
        )

    @classmethod
    def from_rows(cls, name: str, headers: Sequence[str], rows: Iterable[Sequence[str]]) -> "Table":
        rows = [tuple(r) for r in rows]
        cols = tuple(tuple(r[j] for r in rows) for j in range(len(headers)))
        return cls(name, tuple(headers), cols)

    @property
    def n_rows(self) -> int:
        return len(self.columns[0]) if self.columns else 0

    def column(self, header: str) -> tuple[str, ...]:
        try:
            return self.columns[self.headers.index(header)]
        except ValueError:
            raise KeyError(header) from None

    def __contains__(self, header: str) -> bool:
        return header in self.headers

    def rows(self) -> list[tuple[str, ...]]:
        return list(zip(*self.columns))

    def take(self, indices: Sequence[int]) -> "Table":
        idx = list(indices)
        return Table(self.name, self.headers, tuple(tuple(c[i] for i in idx) for c in self.columns))

    def drop(self, *headers: str) -> "Table":
        keep = [j for j, h in enumerate(self.headers) if h not in headers]
        return Table(
            self.name,
            tuple(self.headers[j] for j in keep),
            tuple(self.columns[j] for j in keep),
        )

    def select(self, headers: Sequence[str]) -> "Table":
        return Table(self.name, tuple(headers), tuple(self.column(h) for h in headers))


def load_csv(path, delimiter: str = ",", has_header: bool = True, name: str | None = None) -> Table:
    """Read an RFC-4180 CSV file into a :class:`Table`.

    Ragged rows and duplicate headers raise :class:`TableError`. Empty cells
    stay as empty strings. Without a header row, columns are named ``c0..cN``.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh, delimiter=delimiter))
    rows = [r for r in rows if r]  # blank physical lines
    if not rows:
        raise TableError(f"{path}: empty file")
    if has_header:
        headers, body = rows[0], rows[1:]
    else:
        headers, body = [f"c{j}" for j in range(len(rows[0]))], rows
    width = len(headers)
    for lineno, row in enumerate(body, start=2 if has_header else 1):
        if len(row) != width:
            raise TableError(
                f"{path}: inconsistent row width at record {lineno} ({len(row)} != {width})"
            )
    if not body:
        raise TableError(f"{path}: no data rows")
    if len(set(headers)) != len(headers):
        raise TableError(f"{path}: duplicate headers")
    return Table.from_rows(name or path.stem, headers, body)


def write_csv(table: Table, path, delimiter: str = ",") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(table.headers)
        w.writerows(table.rows())


def table_to_csv_text(table: Table, delimiter: str = ",") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    w.writerow(table.headers)
    w.writerows(table.rows())
    return buf.getvalue()


def parse_number(cell: str) -> float | None:
    try:
        v = float(cell)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def parse_datetime(cell: str) -> datetime | None:
    cell = cell.strip()
    if not cell:
        return None
    try:
        return datetime.fromisoformat(cell)
    except ValueError:
        pass
    for fmt in _DATETIME_FORMATS:
        try:
            return datetime.strptime(cell, fmt)
        except ValueError:
            continue
    return None


def _parse_rate(cells: list[str], parser) -> float:
    if not cells:
        return 0.0
    return sum(parser(c) is not None for c in cells) / len(cells)


def infer_kind(values: Sequence[str]) -> ColumnKind:
    non_empty = [v for v in values if v.strip()]
    if non_empty and _parse_rate(non_empty, parse_number) >= PARSE_RATE:
        return ColumnKind.NUMERIC
    if non_empty and _parse_rate(non_empty, parse_datetime) >= PARSE_RATE:
        return ColumnKind.DATETIME
    d = len(set(values))
    if d <= LOW_CARD_MAX:
        return ColumnKind.LOW_CARD
    if d <= MID_CARD_MAX:
        return ColumnKind.MID_CARD
    return ColumnKind.TEXT


def infer_column_kinds(table: Table) -> list[tuple[str, ColumnKind]]:
    if table.n_rows == 0:
        raise TableError("empty table")
    return [(h, infer_kind(c)) for h, c in zip(table.headers, table.columns)]


@dataclass(frozen=True)
class SupervisedDataset:
    features: Table
    target: tuple[int, ...]
    group_keys: tuple[str, ...] | None = None
    row_indices: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if len(self.target) != self.features.n_rows:
            raise TableError("target length differs from feature rows")
        if self.group_keys is not None and len(self.group_keys) != len(self.target):
            raise TableError("group_keys length differs from target")

    @property
    def y(self) -> np.ndarray:
        return np.asarray(self.target, dtype=np.int64)

    def subset(self, indices: Sequence[int]) -> "SupervisedDataset":
        idx = list(indices)
        return SupervisedDataset(
            self.features.take(idx),
            tuple(self.target[i] for i in idx),
            None if self.group_keys is None else tuple(self.group_keys[i] for i in idx),
            tuple(self.row_indices[i] for i in idx) if self.row_indices else tuple(idx),
        )


def binarize_target(values: Sequence[str]) -> tuple[list[int], list[int]]:
    """Map raw target cells to 0/1 labels.

    Returns ``(labels, kept_rows)``; rows with an empty target are skipped.
    Numeric targets with more than two values are split at the median, ties
    going to class 0. Two-valued targets keep their two classes (the larger
    or lexicographically later value becomes 1).
    """
    kept = [i for i, v in enumerate(values) if v.strip()]
    cells = [values[i].strip() for i in kept]
    distinct = set(cells)
    if len(distinct) < 2:
        raise TableError("target column has a single distinct value")
    nums = [parse_number(c) for c in cells]
    numeric = all(v is not None for v in nums)
    if len(distinct) == 2:
        if numeric:
            hi = max(float(c) for c in distinct)
            return [int(v == hi) for v in nums], kept
        hi = max(distinct)
        return [int(c == hi) for c in cells], kept
    if not numeric:
        raise TableError(f"categorical target with {len(distinct)} classes; only binary targets are supported")
    med = statistics.median(nums)
    labels = [int(v > med) for v in nums]
    if len(set(labels)) < 2:
        raise TableError("median split of target yields a single class")
    return labels, kept


def balance_indices(labels: Sequence[int], seed: int) -> list[int]:
    """Downsample the majority class without replacement; returns sorted row indices."""
    y = np.asarray(labels)
    pos = np.flatnonzero(y == 1)
    neg = np.flatnonzero(y == 0)
    m = min(len(pos), len(neg))
    rng = np.random.default_rng(seed)
    if len(pos) > m:
        pos = rng.choice(pos, size=m, replace=False)
    if len(neg) > m:
        neg = rng.choice(neg, size=m, replace=False)
    return sorted(int(i) for i in np.concatenate([pos, neg]))


def binarize_and_balance(
    table: Table, target_header: str, seed: int = 0, group_header: str | None = None
) -> SupervisedDataset:
    if target_header not in table:
        raise TableError(f"target column {target_header!r} not found")
    labels, kept = binarize_target(table.column(target_header))
    keep = balance_indices(labels, seed)
    rows = [kept[i] for i in keep]
    features = table.drop(target_header).take(rows)
    groups = None
    if group_header:
        gcol = table.column(group_header)
        groups = tuple(gcol[i] for i in rows)
    return SupervisedDataset(features, tuple(labels[i] for i in keep), groups, tuple(rows))
