"""Table schemas, in-memory row storage, column statistics and persistence."""

from __future__ import annotations

import csv
import os
import re
import threading
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, Union

from .errors import (
    AmbiguousColumnError,
    DuplicateTableError,
    HeaderMismatchError,
    PlanError,
    SchemaError,
    UnknownColumnError,
    UnknownTableError,
    ValueTypeError,
)
from .sql import ColumnRef, Predicate, QueryAst

INTEGER = "integer"
TEXT = "text"
TYPE_WIDTHS = {INTEGER: 8, TEXT: 32}

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z", re.ASCII)
_INT_RE = re.compile(r"-?\d+\Z", re.ASCII)

MANIFEST_NAME = "catalog.txt"
STATS_NAME = "stats.csv"
_MANIFEST_MAGIC = "jitindex-catalog 1"


@dataclass(frozen=True)
class Column:
    name: str
    type: str


@dataclass(frozen=True)
class TableSchema:
    name: str
    columns: tuple[Column, ...]

    def __post_init__(self):
        if not _IDENT_RE.match(self.name or ""):
            raise SchemaError(f"invalid table name {self.name!r}")
        object.__setattr__(self, "name", self.name.upper())
        cols = []
        for c in self.columns:
            if not isinstance(c, Column):
                c = Column(*c)
            if not _IDENT_RE.match(c.name or ""):
                raise SchemaError(f"invalid column name {c.name!r}")
            ctype = c.type.lower()
            if ctype in ("int", "integer"):
                ctype = INTEGER
            if ctype not in TYPE_WIDTHS:
                raise SchemaError(f"unsupported column type {c.type!r}")
            cols.append(Column(c.name.upper(), ctype))
        if not cols:
            raise SchemaError(f"table {self.name} has no columns")
        names = [c.name for c in cols]
        dupes = sorted(n for n, k in Counter(names).items() if k > 1)
        if dupes:
            raise SchemaError(f"duplicate column names in {self.name}: {', '.join(dupes)}")
        object.__setattr__(self, "columns", tuple(cols))

    @classmethod
    def of(cls, name: str, columns: Iterable[tuple[str, str]]) -> "TableSchema":
        return cls(name, tuple(Column(n, t) for n, t in columns))

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def row_width_bytes(self) -> int:
        return sum(TYPE_WIDTHS[c.type] for c in self.columns)

    def position(self, column: str) -> int:
        column = column.upper()
        for i, c in enumerate(self.columns):
            if c.name == column:
                return i
        raise UnknownColumnError(f"unknown column {self.name}.{column}")

    def column(self, column: str) -> Column:
        return self.columns[self.position(column)]

    def has_column(self, column: str) -> bool:
        return column.upper() in self.column_names


@dataclass(frozen=True)
class ColumnStats:
    ndv: int = 0
    min_val: int | None = None
    max_val: int | None = None
    usage_count: int = 0


class Table:
    """Row storage for one table. Row ids are positions in ``rows``."""

    def __init__(self, schema: TableSchema):
        self.schema = schema
        self.rows: list[tuple] = []
        self._ndv = {c.name: 0 for c in schema.columns}
        self._min: dict[str, int | None] = {c.name: None for c in schema.columns}
        self._max: dict[str, int | None] = {c.name: None for c in schema.columns}
        self.usage: Counter[str] = Counter()

    @property
    def name(self) -> str:
        return self.schema.name

    @property
    def row_count(self) -> int:
        return len(self.rows)

    def stats(self, column: str) -> ColumnStats:
        column = column.upper()
        if not self.schema.has_column(column):
            raise UnknownColumnError(f"unknown column {self.name}.{column}")
        return ColumnStats(self._ndv[column], self._min[column], self._max[column], self.usage[column])

    def recompute_stats(self) -> None:
        if not self.rows:
            return
        for col, values in zip(self.schema.columns, zip(*self.rows)):
            distinct = set(values)
            self._ndv[col.name] = len(distinct)
            if col.type == INTEGER:
                self._min[col.name] = min(distinct)
                self._max[col.name] = max(distinct)

    def __repr__(self) -> str:
        return f"Table({self.name}, rows={self.row_count})"


# -- query binding ----------------------------------------------------------


@dataclass(frozen=True)
class BoundColumn:
    table: str
    column: str
    position: int
    type: str

    def __str__(self) -> str:
        return f"{self.table}.{self.column}"


Operand = Union[BoundColumn, int, str]


@dataclass(frozen=True)
class BoundPredicate:
    lhs: BoundColumn
    op: str
    rhs: Operand

    @property
    def sargable(self) -> bool:
        return not isinstance(self.rhs, BoundColumn)

    @property
    def tables(self) -> frozenset[str]:
        if isinstance(self.rhs, BoundColumn):
            return frozenset((self.lhs.table, self.rhs.table))
        return frozenset((self.lhs.table,))

    def __str__(self) -> str:
        rhs = self.rhs
        if isinstance(rhs, str):
            rhs = "'" + rhs.replace("'", "''") + "'"
        return f"{self.lhs} {self.op} {rhs}"


@dataclass(frozen=True)
class BoundQuery:
    """A query whose column references are resolved against the catalog."""

    ast: QueryAst
    base: str
    right: str | None
    join_left: BoundColumn | None  # base-table side of the join condition
    join_right: BoundColumn | None  # right-table side
    where: tuple[BoundPredicate, ...]

    def local_predicates(self, table: str) -> list[BoundPredicate]:
        """WHERE predicates that touch only *table*."""
        return [p for p in self.where if p.tables == {table}]

    def cross_predicates(self) -> list[BoundPredicate]:
        return [p for p in self.where if len(p.tables) > 1]

    def predicate_columns(self) -> set[BoundColumn]:
        cols: set[BoundColumn] = set()
        if self.join_left is not None:
            cols.update((self.join_left, self.join_right))
        for p in self.where:
            cols.add(p.lhs)
            if isinstance(p.rhs, BoundColumn):
                cols.add(p.rhs)
        return cols


class Catalog:
    """Registry of tables plus their statistics.

    Mutations (create, load, usage recording) are serialized by an internal
    lock; :class:`ColumnStats` snapshots are immutable.
    """

    def __init__(self):
        self.tables: dict[str, Table] = {}
        self._lock = threading.RLock()

    # -- tables -------------------------------------------------------------

    def create_table(self, schema: TableSchema) -> Table:
        with self._lock:
            if schema.name in self.tables:
                raise DuplicateTableError(f"table {schema.name} already exists")
            table = Table(schema)
            self.tables[schema.name] = table
            return table

    def drop_table(self, name: str) -> None:
        with self._lock:
            if self.tables.pop(name.upper(), None) is None:
                raise UnknownTableError(f"unknown table {name.upper()}")

    def table(self, name: str) -> Table:
        try:
            return self.tables[name.upper()]
        except KeyError:
            raise UnknownTableError(f"unknown table {name.upper()}") from None

    def __contains__(self, name: str) -> bool:
        return name.upper() in self.tables

    def insert_rows(self, name: str, rows: Iterable[Sequence], validate: bool = True) -> int:
        """Bulk-append already typed rows and refresh statistics.

        ``validate=False`` skips per-value type checks; only for trusted
        producers such as the dataset generator.
        """
        table = self.table(name)
        types = [c.type for c in table.schema.columns]
        checked = [tuple(r) for r in rows]
        if validate:
            for i, row in enumerate(checked):
                if len(row) != len(types):
                    raise ValueTypeError(f"row {i}: expected {len(types)} values, got {len(row)}", i)
                for v, t in zip(row, types):
                    ok = isinstance(v, str) if t == TEXT else (isinstance(v, int) and not isinstance(v, bool))
                    if not ok:
                        raise ValueTypeError(f"row {i}: value {v!r} does not match type {t}", i)
        with self._lock:
            if checked:
                table.rows.extend(checked)
                table.recompute_stats()
        return len(checked)

    def load_csv(self, path: str | os.PathLike, table: str) -> int:
        """Append the rows of a CSV file (header first) to *table*."""
        tbl = self.table(table)
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"no such file: {path}")
        schema = tbl.schema
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip().upper() for h in header] != schema.column_names:
                raise HeaderMismatchError(
                    f"{path.name}: header {header} does not match {schema.column_names}"
                )
            rows = [_convert_row(raw, schema, i) for i, raw in enumerate(reader)]
        with self._lock:
            if rows:
                tbl.rows.extend(rows)
                tbl.recompute_stats()
        return len(rows)

    # -- statistics ---------------------------------------------------------

    def column_stats(self, table: str, column: str) -> ColumnStats:
        return self.table(table).stats(column)

    def record_column_usage(self, q: QueryAst | BoundQuery) -> None:
        """Count one use for every distinct column in the join/WHERE predicates."""
        bound = q if isinstance(q, BoundQuery) else self.bind(q)
        with self._lock:
            for col in bound.predicate_columns():
                self.tables[col.table].usage[col.column] += 1

    # -- binding ------------------------------------------------------------

    def bind(self, q: QueryAst) -> BoundQuery:
        base = self.table(q.base_table)
        tables = [base]
        if q.join is not None:
            right = self.table(q.join.right_table)
            if right.name == base.name:
                raise PlanError("self-joins are not supported")
            tables.append(right)

        def resolve(ref: ColumnRef) -> BoundColumn:
            if ref.table is not None:
                owner = next((t for t in tables if t.name == ref.table), None)
                if owner is None:
                    raise UnknownTableError(f"table {ref.table} is not part of the query")
                pos = owner.schema.position(ref.name)
            else:
                owners = [t for t in tables if t.schema.has_column(ref.name)]
                if not owners:
                    raise UnknownColumnError(f"unknown column {ref.name}")
                if len(owners) > 1:
                    raise AmbiguousColumnError(f"column {ref.name} is ambiguous; qualify it")
                owner = owners[0]
                pos = owner.schema.position(ref.name)
            col = owner.schema.columns[pos]
            return BoundColumn(owner.name, col.name, pos, col.type)

        def bind_pred(p: Predicate) -> BoundPredicate:
            lhs = resolve(p.lhs)
            if isinstance(p.rhs, ColumnRef):
                rhs = resolve(p.rhs)
                if rhs.type != lhs.type:
                    raise PlanError(f"cannot compare {lhs} ({lhs.type}) with {rhs} ({rhs.type})")
            else:
                rhs = p.rhs
                expected = INTEGER if isinstance(rhs, int) else TEXT
                if lhs.type != expected:
                    raise PlanError(f"cannot compare {lhs} ({lhs.type}) with {expected} literal")
            return BoundPredicate(lhs, p.op, rhs)

        join_left = join_right = None
        if q.join is not None:
            a, b = resolve(q.join.left_col), resolve(q.join.right_col)
            if a.table == b.table:
                raise PlanError("join condition must reference both tables")
            if a.table != base.name:
                a, b = b, a
            if a.type != b.type:
                raise PlanError(f"cannot join {a} ({a.type}) with {b} ({b.type})")
            join_left, join_right = a, b
        where = tuple(bind_pred(p) for p in q.where)
        return BoundQuery(
            q, base.name, tables[1].name if len(tables) > 1 else None, join_left, join_right, where
        )

    # -- persistence --------------------------------------------------------

    def save(self, directory: str | os.PathLike) -> None:
        """Write manifest, one CSV per table and the stats CSV into *directory*."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        lines = [_MANIFEST_MAGIC]
        for name in sorted(self.tables):
            t = self.tables[name]
            cols = " ".join(f"{c.name}:{c.type}" for c in t.schema.columns)
            lines.append(f"table {name} {cols}")
            write_table_csv(t, d / f"{name}.csv")
        (d / MANIFEST_NAME).write_text("\n".join(lines) + "\n", encoding="utf-8")
        with (d / STATS_NAME).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["table", "column", "ndv", "min_val", "max_val", "usage_count"])
            for name in sorted(self.tables):
                t = self.tables[name]
                for c in t.schema.columns:
                    s = t.stats(c.name)
                    w.writerow([
                        name, c.name, s.ndv,
                        "" if s.min_val is None else s.min_val,
                        "" if s.max_val is None else s.max_val,
                        s.usage_count,
                    ])

    @classmethod
    def load(cls, directory: str | os.PathLike) -> "Catalog":
        d = Path(directory)
        manifest = d / MANIFEST_NAME
        if not manifest.is_file():
            raise FileNotFoundError(f"no catalog manifest in {d}")
        lines = manifest.read_text(encoding="utf-8").splitlines()
        if not lines or lines[0] != _MANIFEST_MAGIC:
            raise SchemaError(f"{manifest}: not a catalog manifest")
        cat = cls()
        for line in lines[1:]:
            if not line.strip():
                continue
            kind, name, *cols = line.split()
            if kind != "table":
                raise SchemaError(f"{manifest}: unexpected entry {kind!r}")
            schema = TableSchema.of(name, (c.split(":", 1) for c in cols))
            table = cat.create_table(schema)
            with (d / f"{name}.csv").open(newline="", encoding="utf-8") as fh:
                reader = csv.reader(fh)
                header = next(reader, None)
                if header != schema.column_names:
                    raise HeaderMismatchError(f"{name}.csv: header does not match manifest")
                table.rows = [_convert_row(raw, schema, i) for i, raw in enumerate(reader)]
        with (d / STATS_NAME).open(newline="", encoding="utf-8") as fh:
            for rec in csv.DictReader(fh):
                t = cat.table(rec["table"])
                col = rec["column"]
                t._ndv[col] = int(rec["ndv"])
                t._min[col] = int(rec["min_val"]) if rec["min_val"] else None
                t._max[col] = int(rec["max_val"]) if rec["max_val"] else None
                t.usage[col] = int(rec["usage_count"])
        return cat


def write_table_csv(table: Table, path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.schema.column_names)
        w.writerows(table.rows)


def _convert_row(raw: list[str], schema: TableSchema, index: int) -> tuple:
    if len(raw) != len(schema.columns):
        raise ValueTypeError(
            f"row {index}: expected {len(schema.columns)} values, got {len(raw)}", index
        )
    out = []
    for value, col in zip(raw, schema.columns):
        if col.type == INTEGER:
            if not _INT_RE.match(value):
                raise ValueTypeError(f"row {index}: {col.name} expects an integer, got {value!r}", index)
            out.append(int(value))
        else:
            out.append(value)
    return tuple(out)
