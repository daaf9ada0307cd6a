"""Selectivity estimation, page-I/O costing and access-path selection.

Every cost is an estimated number of page accesses. A table scan reads every
heap page; an index scan descends the tree, reads the matching fraction of
leaf pages and fetches the matching fraction of heap pages (scaled by
``fetch_factor``). Joins are nested loops whose inner side is re-evaluated
per outer row, either as a full access path or as an index lookup on the
join column.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

from .catalog import BoundColumn, BoundPredicate, BoundQuery, Catalog, ColumnStats
from .errors import NonPrefixPredicateError
from .index import DEFAULT_FAN_OUT, DEFAULT_PAGE_SIZE, REAL, IndexDescriptor, split_prefix
from .sql import QueryAst, render

COLUMN_RANGE_SELECTIVITY = 1.0 / 3.0


@dataclass(frozen=True, order=True)
class CostEstimate:
    pages: float = 0.0

    def __add__(self, other: "CostEstimate") -> "CostEstimate":
        return CostEstimate(self.pages + other.pages)


@dataclass(frozen=True)
class CostModel:
    page_size: int = DEFAULT_PAGE_SIZE
    fan_out: int = DEFAULT_FAN_OUT
    fetch_factor: float = 1.0


# -- plan nodes --------------------------------------------------------------


@dataclass(frozen=True)
class TableScan:
    table: str
    filters: tuple[BoundPredicate, ...]
    cost: CostEstimate
    out_rows: float


@dataclass(frozen=True)
class IndexScan:
    table: str
    index_id: str
    index_columns: tuple[str, ...]
    index_mode: str
    matched: tuple[BoundPredicate, ...]
    residual: tuple[BoundPredicate, ...]
    cost: CostEstimate
    out_rows: float

    @property
    def is_lookup(self) -> bool:
        """True when the probe is parameterized by an outer join column."""
        return any(not p.sargable for p in self.matched)


@dataclass(frozen=True)
class NestedLoopJoin:
    outer: Union[TableScan, IndexScan]
    inner: Union[TableScan, IndexScan]
    outer_col: BoundColumn
    inner_col: BoundColumn
    residual: tuple[BoundPredicate, ...]
    cost: CostEstimate
    out_rows: float


PlanNode = Union[TableScan, IndexScan, NestedLoopJoin]


def plan_kind(node: PlanNode) -> str:
    if isinstance(node, TableScan):
        return "TABLE_SCAN"
    if isinstance(node, IndexScan):
        return "INDEX_SCAN"
    return "NLJ"


def plan_indexes(node: PlanNode) -> list[IndexScan]:
    if isinstance(node, IndexScan):
        return [node]
    if isinstance(node, NestedLoopJoin):
        return plan_indexes(node.outer) + plan_indexes(node.inner)
    return []


def plan_object(node: PlanNode) -> str:
    if isinstance(node, NestedLoopJoin):
        return f"{node.outer.table}+{node.inner.table}"
    return node.table


def plan_index_label(node: PlanNode) -> str:
    ids = [s.index_id for s in plan_indexes(node)]
    return "+".join(ids) if ids else "-"


def plan_line(node: PlanNode) -> str:
    return (
        f"{plan_kind(node)} object={plan_object(node)} index={plan_index_label(node)} "
        f"cost={node.cost.pages:.4f} rows={round(node.out_rows)}"
    )


def plan_sort_key(node: PlanNode) -> tuple:
    scans = plan_indexes(node)
    return (
        node.cost.pages,
        sum(len(s.index_columns) for s in scans),
        "+".join(s.index_id for s in scans),
        plan_kind(node),
        plan_object(node),
    )


def scan_object(node: PlanNode) -> str:
    return "Index" if plan_indexes(node) else "Table"


# -- reports -----------------------------------------------------------------


@dataclass(frozen=True)
class ExplainReport:
    query: str
    chosen_plan: PlanNode
    alternatives: tuple[tuple[str, float], ...]
    scan_object: str
    executed: bool

    @property
    def text(self) -> str:
        lines = [f"QUERY {self.query}", f"PLAN {plan_line(self.chosen_plan)}"]
        lines += [f"ALT  {summary}" for summary, _ in self.alternatives]
        lines.append(f"MODE {'EXECUTED' if self.executed else 'COMPILE_ONLY'}")
        return "\n".join(lines)

    def __str__(self) -> str:
        return self.text


# -- estimation --------------------------------------------------------------


def selectivity(
    p: BoundPredicate, stats: ColumnStats, rows: int, rhs_stats: ColumnStats | None = None
) -> float:
    """Estimated fraction of *rows* satisfying *p*; *stats* describe ``p.lhs``."""
    if not p.sargable:
        if p.op == "=":
            rhs_ndv = rhs_stats.ndv if rhs_stats is not None else 0
            return 1.0 / max(stats.ndv, rhs_ndv, 1)
        return COLUMN_RANGE_SELECTIVITY
    lo, hi, v = stats.min_val, stats.max_val, p.rhs
    has_range = lo is not None and hi is not None and isinstance(v, int)
    if p.op == "=":
        if has_range and not lo <= v <= hi:
            return 0.0
        return 1.0 / max(stats.ndv, 1)
    if not has_range or hi == lo:
        return 1.0
    if p.op in ("<", "<="):
        span = v - lo
    else:
        span = hi - v
    return min(1.0, max(0.0, span / (hi - lo)))


class Planner:
    def __init__(self, catalog: Catalog, model: CostModel | None = None):
        self.catalog = catalog
        self.model = model or CostModel()

    # -- primitive estimates ------------------------------------------------

    def table_pages(self, table: str) -> int:
        t = self.catalog.table(table)
        return max(1, -(-t.row_count * t.schema.row_width_bytes // self.model.page_size))

    def cost_table_scan(self, table: str) -> CostEstimate:
        return CostEstimate(float(self.table_pages(table)))

    def predicate_selectivity(self, p: BoundPredicate) -> float:
        t = self.catalog.table(p.lhs.table)
        rhs_stats = None
        if isinstance(p.rhs, BoundColumn):
            rhs_stats = self.catalog.column_stats(p.rhs.table, p.rhs.column)
        return selectivity(p, t.stats(p.lhs.column), t.row_count, rhs_stats)

    def conjunction_selectivity(self, preds: Iterable[BoundPredicate]) -> float:
        sel = 1.0
        for p in preds:
            sel *= self.predicate_selectivity(p)
        return sel

    def cost_index_scan_sel(self, index: IndexDescriptor, sel: float, table: str) -> CostEstimate:
        s = index.stats
        pages = s.height + sel * s.leaf_pages + sel * self.table_pages(table) * self.model.fetch_factor
        return CostEstimate(pages)

    def cost_index_scan(
        self, index: IndexDescriptor, preds: Sequence[BoundPredicate], table: str
    ) -> CostEstimate:
        """Cost of probing *index* with the prefix-matching subset of *preds*."""
        matched, _ = split_prefix(index.columns, [p for p in preds if p.lhs.table == index.table])
        if index.table != table.upper() or not matched:
            raise NonPrefixPredicateError(f"{index.id} cannot serve {[str(p) for p in preds]}")
        return self.cost_index_scan_sel(index, self.conjunction_selectivity(matched), table)

    # -- access paths -------------------------------------------------------

    def access_paths(
        self,
        table: str,
        preds: Sequence[BoundPredicate],
        indexes: Iterable[IndexDescriptor],
        lookup: BoundPredicate | None = None,
    ) -> list[PlanNode]:
        """Single-table access paths.

        With *lookup* (a ``inner_col = outer_col`` predicate) only index scans
        whose matched prefix contains that lookup are produced.
        """
        rows = self.catalog.table(table).row_count
        out_rows = rows * self.conjunction_selectivity(preds)
        paths: list[PlanNode] = []
        if lookup is None:
            paths.append(TableScan(table, tuple(preds), self.cost_table_scan(table), out_rows))
        sargable = [p for p in preds if p.sargable]
        candidates = sargable if lookup is None else [lookup] + sargable
        for ix in indexes:
            if ix.table != table:
                continue
            matched, _ = split_prefix(ix.columns, candidates)
            if not matched or (lookup is not None and lookup not in matched):
                continue
            residual = tuple(p for p in preds if p not in matched)
            cost = self.cost_index_scan_sel(ix, self.conjunction_selectivity(matched), table)
            rows_out = out_rows
            if lookup is not None:
                rows_out *= self.predicate_selectivity(lookup)
            paths.append(
                IndexScan(table, ix.id, ix.columns, ix.mode, tuple(matched), residual, cost, rows_out)
            )
        return paths

    def bind(self, q: QueryAst | BoundQuery) -> BoundQuery:
        return q if isinstance(q, BoundQuery) else self.catalog.bind(q)

    def alternatives(self, q: QueryAst | BoundQuery, indexes: Iterable[IndexDescriptor]) -> list[PlanNode]:
        """Every enumerated plan, cheapest first (ties: fewer index columns, then id)."""
        bq = self.bind(q)
        indexes = list(indexes)
        outer_paths = self.access_paths(bq.base, bq.local_predicates(bq.base), indexes)
        if bq.right is None:
            return sorted(outer_paths, key=plan_sort_key)
        inner_preds = bq.local_predicates(bq.right)
        lookup = BoundPredicate(bq.join_right, "=", bq.join_left)
        inner_paths = self.access_paths(bq.right, inner_preds, indexes)
        inner_paths += self.access_paths(bq.right, inner_preds, indexes, lookup=lookup)
        cross = tuple(bq.cross_predicates())
        join_sel = self.predicate_selectivity(lookup) * self.conjunction_selectivity(cross)
        inner_rows = self.catalog.table(bq.right).row_count * self.conjunction_selectivity(inner_preds)
        plans: list[PlanNode] = []
        for outer in outer_paths:
            out_rows = outer.out_rows * inner_rows * join_sel
            for inner in inner_paths:
                cost = CostEstimate(outer.cost.pages + outer.out_rows * inner.cost.pages)
                plans.append(NestedLoopJoin(outer, inner, bq.join_left, bq.join_right, cross, cost, out_rows))
        return sorted(plans, key=plan_sort_key)

    def plan(self, q: QueryAst | BoundQuery, indexes: Iterable[IndexDescriptor] = ()) -> PlanNode:
        return self.alternatives(q, indexes)[0]

    def explain(
        self, q: QueryAst | BoundQuery, indexes: Iterable[IndexDescriptor] = (), executed: bool = False
    ) -> ExplainReport:
        bq = self.bind(q)
        alts = self.alternatives(bq, indexes)
        chosen = alts[0]
        return ExplainReport(
            query=render(bq.ast),
            chosen_plan=chosen,
            alternatives=tuple((plan_line(a), a.cost.pages) for a in alts),
            scan_object=scan_object(chosen),
            executed=executed,
        )


def uses_only_real(node: PlanNode) -> bool:
    return all(s.index_mode == REAL for s in plan_indexes(node))
