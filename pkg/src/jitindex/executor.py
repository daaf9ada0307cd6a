"""Plan execution plus a reference evaluator that ignores indexes."""

from __future__ import annotations

import operator
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .catalog import BoundColumn, BoundPredicate, BoundQuery, Catalog
from .errors import PlanError
from .index import REAL, IndexManager
from .planner import IndexScan, NestedLoopJoin, PlanNode, Planner, TableScan
from .sql import QueryAst

_OPS: dict[str, Callable] = {
    "=": operator.eq,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}


class HypotheticalPlanError(PlanError):
    """A plan handed to the executor references a statistics-only index."""


@dataclass
class ResultSet:
    columns: tuple[str, ...]
    rows: list[tuple] = field(default_factory=list)
    actual_pages: float = 0.0

    def __len__(self) -> int:
        return len(self.rows)

    def canonical(self) -> list[tuple]:
        return sorted(self.rows)


def _compile(preds: Sequence[BoundPredicate], offsets: dict[str, int]) -> Callable[[tuple], bool] | None:
    """Build a row test for *preds*; ``offsets`` maps table name to its first slot."""
    tests = []
    for p in preds:
        fn = _OPS[p.op]
        lpos = offsets[p.lhs.table] + p.lhs.position
        if isinstance(p.rhs, BoundColumn):
            rpos = offsets[p.rhs.table] + p.rhs.position
            tests.append(lambda r, f=fn, a=lpos, b=rpos: f(r[a], r[b]))
        else:
            tests.append(lambda r, f=fn, a=lpos, v=p.rhs: f(r[a], v))
    if not tests:
        return None
    if len(tests) == 1:
        return tests[0]
    return lambda r: all(t(r) for t in tests)


def _emit(out: list, orow: tuple, matches: list, cross) -> None:
    if cross is None:
        out.extend([orow + irow for irow in matches])
        return
    for irow in matches:
        row = orow + irow
        if cross(row):
            out.append(row)


class Executor:
    def __init__(self, catalog: Catalog, indexes: IndexManager, planner: Planner):
        self.catalog = catalog
        self.indexes = indexes
        self.planner = planner

    def _columns(self, table: str, qualified: bool) -> tuple[str, ...]:
        names = self.catalog.table(table).schema.column_names
        return tuple(f"{table}.{c}" for c in names) if qualified else tuple(names)

    def _index_pages(self, index_id: str, table: str, fetched: int) -> float:
        desc = self.indexes.get(index_id)
        rows = self.catalog.table(table).row_count
        frac = fetched / rows if rows else 0.0
        pages = self.planner.table_pages(table)
        s = desc.stats
        return s.height + frac * s.leaf_pages + frac * pages * self.planner.model.fetch_factor

    def _check_real(self, plan: PlanNode) -> None:
        if isinstance(plan, NestedLoopJoin):
            self._check_real(plan.outer)
            self._check_real(plan.inner)
        elif isinstance(plan, IndexScan):
            if plan.index_mode != REAL or self.indexes.get(plan.index_id).mode != REAL:
                raise HypotheticalPlanError(f"plan references hypothetical index {plan.index_id}")

    def execute(self, plan: PlanNode) -> ResultSet:
        self._check_real(plan)
        if isinstance(plan, NestedLoopJoin):
            return self._join(plan)
        return self._access(plan, qualified=False)

    def _access(self, plan: TableScan | IndexScan, qualified: bool) -> ResultSet:
        table = self.catalog.table(plan.table)
        cols = self._columns(table.name, qualified)
        if isinstance(plan, TableScan):
            test = _compile(plan.filters, {table.name: 0})
            rows = table.rows if test is None else [r for r in table.rows if test(r)]
            return ResultSet(cols, list(rows), float(self.planner.table_pages(table.name)))
        if plan.is_lookup:
            raise PlanError("a lookup index scan only runs as a join inner side")
        rids = self.indexes.probe(plan.index_id, plan.matched)
        data = table.rows
        fetched = [data[i] for i in rids]
        test = _compile(plan.residual, {table.name: 0})
        if test is not None:
            fetched = [r for r in fetched if test(r)]
        return ResultSet(cols, fetched, self._index_pages(plan.index_id, table.name, len(rids)))

    def _join(self, plan: NestedLoopJoin) -> ResultSet:
        outer = self._access(plan.outer, qualified=True)
        inner_table = self.catalog.table(plan.inner.table)
        cols = outer.columns + self._columns(inner_table.name, qualified=True)
        width = len(outer.columns)
        offsets = {plan.outer.table: 0, inner_table.name: width}
        cross = _compile(plan.residual, offsets)
        opos = plan.outer_col.position
        out: list[tuple] = []
        pages = outer.actual_pages

        if isinstance(plan.inner, IndexScan) and plan.inner.is_lookup:
            inner = plan.inner
            literal = [p for p in inner.matched if p.sargable]
            lookup = next(p for p in inner.matched if not p.sargable)
            residual = _compile(inner.residual, {inner_table.name: 0})
            data = inner_table.rows
            memo: dict = {}
            for orow in outer.rows:
                key = orow[opos]
                hit = memo.get(key)
                if hit is None:
                    probe = [BoundPredicate(lookup.lhs, "=", key)] + literal
                    rids = self.indexes.probe(inner.index_id, probe)
                    matches = [data[i] for i in rids]
                    if residual is not None:
                        matches = [r for r in matches if residual(r)]
                    hit = memo[key] = (matches, self._index_pages(inner.index_id, inner_table.name, len(rids)))
                else:
                    self.indexes.touch(inner.index_id)
                matches, probe_pages = hit
                pages += probe_pages
                _emit(out, orow, matches, cross)
            return ResultSet(cols, out, pages)

        inner_rs = self._access(plan.inner, qualified=True)
        ipos = plan.inner_col.position
        inner_rows = inner_rs.rows
        for orow in outer.rows:
            key = orow[opos]
            pages += inner_rs.actual_pages
            matches = [irow for irow in inner_rows if irow[ipos] == key]
            _emit(out, orow, matches, cross)
        return ResultSet(cols, out, pages)

    # -- reference semantics -----------------------------------------------

    def oracle_execute(self, q: QueryAst | BoundQuery) -> ResultSet:
        """Evaluate *q* by brute force: every row (pair), every predicate."""
        bq = q if isinstance(q, BoundQuery) else self.catalog.bind(q)

        def value(operand, env):
            if isinstance(operand, BoundColumn):
                return env[operand.table][operand.position]
            return operand

        def holds(env) -> bool:
            for p in bq.where:
                if not _OPS[p.op](value(p.lhs, env), value(p.rhs, env)):
                    return False
            return True

        base = self.catalog.table(bq.base)
        if bq.right is None:
            rows = [r for r in base.rows if holds({base.name: r})]
            return ResultSet(self._columns(base.name, False), rows, 0.0)
        right = self.catalog.table(bq.right)
        lpos, rpos = bq.join_left.position, bq.join_right.position
        rows = []
        for a in base.rows:
            for b in right.rows:
                if a[lpos] == b[rpos] and holds({base.name: a, right.name: b}):
                    rows.append(a + b)
        cols = self._columns(base.name, True) + self._columns(right.name, True)
        return ResultSet(cols, rows, 0.0)
