"""Ordered composite-key indexes, real and hypothetical.

A real index keeps every ``(key tuple, row id)`` pair in a sorted array and
answers equality-prefix / single-range probes with binary search. A
hypothetical index carries statistics only and can be costed by the planner
but never probed.

Index shape (leaf pages, height) is a modeled quantity computed from row
counts and fixed column widths, not measured from the Python structure, so
real and estimated statistics agree exactly.
"""

from __future__ import annotations

import itertools
import math
import threading
from bisect import bisect_left
from dataclasses import dataclass, field, replace
from functools import total_ordering
from typing import Iterable, Sequence

from .catalog import TYPE_WIDTHS, BoundPredicate, Catalog
from .errors import (
    DuplicateIndexError,
    HypotheticalProbeError,
    NonPrefixPredicateError,
    UnknownColumnError,
    UnknownIndexError,
)
from .sql import RANGE_OPS

REAL = "real"
HYPOTHETICAL = "hypothetical"
CONVENTIONAL = "conventional"
JIT = "jit"

ROW_ID_BYTES = 8
DEFAULT_PAGE_SIZE = 8192
DEFAULT_FAN_OUT = 256


@dataclass(frozen=True)
class IndexStats:
    key_ndv: int
    leaf_pages: int
    height: int
    size_bytes: int


@dataclass
class IndexDescriptor:
    id: str
    table: str
    columns: tuple[str, ...]
    mode: str = REAL
    kind: str = CONVENTIONAL
    stats: IndexStats = field(default_factory=lambda: IndexStats(0, 1, 1, 0))
    last_used: int = 0
    created_at: int = 0

    @property
    def label(self) -> str:
        return "index(" + ",".join(c.lower() for c in self.columns) + ")"

    @property
    def is_real(self) -> bool:
        return self.mode == REAL


class LogicalClock:
    """Monotone counter; every ``tick`` returns a fresh, larger timestamp."""

    def __init__(self, start: int = 0):
        self._value = start
        self._lock = threading.Lock()

    def tick(self) -> int:
        with self._lock:
            self._value += 1
            return self._value

    @property
    def now(self) -> int:
        return self._value


@total_ordering
class _Top:
    """Sorts after every value; used to close key-prefix ranges."""

    def __eq__(self, other):
        return isinstance(other, _Top)

    def __lt__(self, other):
        return False

    def __hash__(self):
        return 0


TOP = _Top()


def index_shape(rows: int, key_width: int, page_size: int, fan_out: int) -> tuple[int, int, int]:
    """Return ``(size_bytes, leaf_pages, height)`` for an index over *rows* rows."""
    size = rows * (key_width + ROW_ID_BYTES)
    leaf_pages = max(1, -(-size // page_size))
    # ceil(log_F(leaf_pages)) without floating point
    levels, reach = 0, 1
    while reach < leaf_pages:
        reach *= fan_out
        levels += 1
    return size, leaf_pages, max(1, levels + 1)


def split_prefix(
    columns: Sequence[str], preds: Iterable[BoundPredicate]
) -> tuple[list[BoundPredicate], list[BoundPredicate]]:
    """Split *preds* into those an index on *columns* can consume and the rest.

    Consumable: one equality per leading column, optionally followed by a single
    range predicate on the next column. Only literal (sargable) predicates and
    parameterized equalities marked by the caller are considered.
    """
    preds = list(preds)
    matched: list[BoundPredicate] = []
    used: set[int] = set()
    for col in columns:
        eq = next(
            (i for i, p in enumerate(preds) if i not in used and p.lhs.column == col and p.op == "="),
            None,
        )
        if eq is not None:
            used.add(eq)
            matched.append(preds[eq])
            continue
        rng = next(
            (i for i, p in enumerate(preds) if i not in used and p.lhs.column == col and p.op in RANGE_OPS),
            None,
        )
        if rng is not None:
            used.add(rng)
            matched.append(preds[rng])
        break
    residual = [p for i, p in enumerate(preds) if i not in used]
    return matched, residual


class _OrderedIndex:
    __slots__ = ("keys", "rids")

    def __init__(self, keys: list[tuple], rids: list[int]):
        self.keys = keys
        self.rids = rids

    def bounds(self, prefix: tuple, range_op: str | None, value) -> tuple[int, int]:
        keys = self.keys
        if range_op is None:
            return bisect_left(keys, prefix), bisect_left(keys, prefix + (TOP,))
        lo = bisect_left(keys, prefix)
        hi = bisect_left(keys, prefix + (TOP,))
        if range_op == "<":
            hi = bisect_left(keys, prefix + (value,), lo, hi)
        elif range_op == "<=":
            hi = bisect_left(keys, prefix + (value, TOP), lo, hi)
        elif range_op == ">":
            lo = bisect_left(keys, prefix + (value, TOP), lo, hi)
        else:  # >=
            lo = bisect_left(keys, prefix + (value,), lo, hi)
        return lo, max(lo, hi)


class IndexManager:
    """Builds, probes and drops indexes over the tables of a :class:`Catalog`."""

    def __init__(
        self,
        catalog: Catalog,
        clock: LogicalClock | None = None,
        page_size: int = DEFAULT_PAGE_SIZE,
        fan_out: int = DEFAULT_FAN_OUT,
    ):
        self.catalog = catalog
        self.clock = clock or LogicalClock()
        self.page_size = page_size
        self.fan_out = fan_out
        self.descriptors: dict[str, IndexDescriptor] = {}
        self._payload: dict[str, _OrderedIndex] = {}
        self._seq = itertools.count(1)
        self._lock = threading.RLock()

    # -- queries over the registry -----------------------------------------

    def get(self, index_id: str) -> IndexDescriptor:
        try:
            return self.descriptors[index_id]
        except KeyError:
            raise UnknownIndexError(f"unknown index {index_id}") from None

    def real_indexes(self, table: str | None = None, kind: str | None = None) -> list[IndexDescriptor]:
        return [
            d for d in self.descriptors.values()
            if d.mode == REAL
            and (table is None or d.table == table.upper())
            and (kind is None or d.kind == kind)
        ]

    def hypothetical_indexes(self) -> list[IndexDescriptor]:
        return [d for d in self.descriptors.values() if d.mode == HYPOTHETICAL]

    def find_real(self, table: str, columns: Sequence[str]) -> IndexDescriptor | None:
        cols = tuple(c.upper() for c in columns)
        for d in self.real_indexes(table):
            if d.columns == cols:
                return d
        return None

    # -- operations ---------------------------------------------------------

    def _check_columns(self, table: str, columns: Sequence[str]) -> tuple[str, tuple[str, ...], list[int]]:
        tbl = self.catalog.table(table)
        cols = tuple(c.upper() for c in columns)
        if not cols:
            raise UnknownColumnError("an index needs at least one column")
        if len(set(cols)) != len(cols):
            raise UnknownColumnError(f"repeated column in index column list {cols}")
        positions = [tbl.schema.position(c) for c in cols]
        return tbl.name, cols, positions

    def estimate_index(self, table: str, columns: Sequence[str]) -> IndexStats:
        """Formula-only statistics; key_ndv assumes column independence."""
        name, cols, _ = self._check_columns(table, columns)
        tbl = self.catalog.table(name)
        rows = tbl.row_count
        width = sum(TYPE_WIDTHS[tbl.schema.column(c).type] for c in cols)
        size, leaf, height = index_shape(rows, width, self.page_size, self.fan_out)
        key_ndv = min(rows, math.prod(tbl.stats(c).ndv for c in cols))
        return IndexStats(key_ndv, leaf, height, size)

    def build_index(
        self, table: str, columns: Sequence[str], mode: str = REAL, kind: str = CONVENTIONAL
    ) -> IndexDescriptor:
        if mode not in (REAL, HYPOTHETICAL):
            raise ValueError(f"bad index mode {mode!r}")
        if kind not in (CONVENTIONAL, JIT):
            raise ValueError(f"bad index kind {kind!r}")
        name, cols, positions = self._check_columns(table, columns)
        with self._lock:
            if mode == REAL and self.find_real(name, cols) is not None:
                raise DuplicateIndexError(f"a real index on {name}({', '.join(cols)}) already exists")
            tbl = self.catalog.table(name)
            rows = tbl.rows
            if len(positions) == 1:
                p = positions[0]
                keys = [(r[p],) for r in rows]
            else:
                keys = [tuple(r[p] for p in positions) for r in rows]
            width = sum(TYPE_WIDTHS[tbl.schema.column(c).type] for c in cols)
            size, leaf, height = index_shape(len(rows), width, self.page_size, self.fan_out)
            stats = IndexStats(len(set(keys)), leaf, height, size)
            seq = next(self._seq)
            prefix = "HYP" if mode == HYPOTHETICAL else ("JIT" if kind == JIT else "IDX")
            index_id = f"{prefix}{seq:04d}_{name}_{'_'.join(cols)}"
            now = self.clock.tick()
            desc = IndexDescriptor(index_id, name, cols, mode, kind, stats, now, now)
            if mode == REAL:
                order = sorted(range(len(keys)), key=keys.__getitem__)
                self._payload[index_id] = _OrderedIndex([keys[i] for i in order], order)
            self.descriptors[index_id] = desc
            return desc

    def touch(self, index: IndexDescriptor | str) -> int:
        desc = self.get(index if isinstance(index, str) else index.id)
        desc.last_used = self.clock.tick()
        return desc.last_used

    def probe(self, index: IndexDescriptor | str, predicates: Sequence[BoundPredicate]) -> list[int]:
        """Row ids satisfying *predicates*, in key order.

        *predicates* must be literal predicates forming an equality prefix of
        the index columns, optionally followed by one range predicate.
        """
        desc = self.get(index if isinstance(index, str) else index.id)
        if desc.mode != REAL:
            raise HypotheticalProbeError(f"{desc.id} is statistics-only and cannot be probed")
        preds = list(predicates)
        for p in preds:
            if not p.sargable or p.lhs.table != desc.table:
                raise NonPrefixPredicateError(f"predicate {p} cannot be served by {desc.id}")
        matched, residual = split_prefix(desc.columns, preds)
        if residual or not matched:
            raise NonPrefixPredicateError(
                f"predicates {[str(p) for p in preds]} are not a prefix of {desc.label}"
            )
        prefix = tuple(p.rhs for p in matched if p.op == "=")
        last = matched[-1]
        range_op, value = (last.op, last.rhs) if last.op != "=" else (None, None)
        payload = self._payload[desc.id]
        lo, hi = payload.bounds(prefix, range_op, value)
        self.touch(desc)
        return payload.rids[lo:hi]

    def drop_index(self, index_id: str) -> None:
        with self._lock:
            if self.descriptors.pop(index_id, None) is None:
                raise UnknownIndexError(f"unknown index {index_id}")
            self._payload.pop(index_id, None)

    def snapshot(self, index_id: str) -> IndexDescriptor:
        """A detached copy of a descriptor (for logs and reports)."""
        return replace(self.get(index_id))
