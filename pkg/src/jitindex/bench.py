"""Benchmark driver and the exported statistics tables."""

from __future__ import annotations

import csv
import io
import os
import time
from dataclasses import astuple, dataclass, field, fields
from pathlib import Path

from .catalog import Catalog, TableSchema
from .dataset import BENCHMARK_QUERIES
from .errors import EngineError
from .index import IndexManager
from .jit import JitEngine
from .planner import plan_index_label, plan_kind, plan_object
from .sql import parse

DEFAULT_MAX_RESULT_ROWS = 1_000_000

HISTORY_SCHEMA = TableSchema.of("JIT_HISTORY", [
    ("SEQ", "integer"),
    ("TS", "integer"),
    ("QUERY_HASH", "text"),
    ("QUERY", "text"),
    ("COST_C", "text"),
    ("COST_PAGES", "integer"),
    ("A", "integer"),
    ("B", "integer"),
    ("TRIGGERED", "integer"),
    ("PATH", "text"),
    ("INDEX_ID", "text"),
    ("INDEXED_COST", "text"),
])

EXPLAIN_SCHEMA = TableSchema.of("JIT_EXPLAIN", [
    ("SEQ", "integer"),
    ("QUERY", "text"),
    ("PLAN", "text"),
    ("OBJECT", "text"),
    ("INDEX_ID", "text"),
    ("COST", "text"),
    ("COST_PAGES", "integer"),
    ("EST_ROWS", "integer"),
    ("SCAN_OBJECT", "text"),
    ("MODE", "text"),
    ("N_ALTERNATIVES", "integer"),
])

HISTORY_FILE = "jit_history.csv"
EXPLAIN_FILE = "jit_explain.csv"


class DatasetMissingError(EngineError):
    pass


@dataclass
class BenchRow:
    query_id: int
    sql: str
    cost_without_jit: float
    cost_with_jit: float
    index_created: str
    scan_object_before: str
    scan_object_after: str
    wall_ms_first: float
    wall_ms_second: float
    path_first: str
    path_second: str
    executed: bool


@dataclass
class BenchReport:
    rows: list[BenchRow] = field(default_factory=list)
    explain: list[str] = field(default_factory=list)

    COST_COLUMNS = ("query_id", "sql", "cost_without_jit", "cost_with_jit", "index_created",
                    "scan_object_before", "scan_object_after", "path_first", "path_second", "executed")

    def cost_columns(self) -> list[tuple]:
        """Every column except wall-clock timings."""
        return [tuple(getattr(r, c) for c in self.COST_COLUMNS) for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f.name for f in fields(BenchRow)])
        for r in self.rows:
            w.writerow([_csv_value(v) for v in astuple(r)])
        return buf.getvalue()

    def to_table(self) -> str:
        header = ["#", "cost w/o JIT", "cost with JIT", "JIT index", "scan before", "scan after",
                  "ms first", "ms second", "path"]
        lines = [header]
        for r in self.rows:
            lines.append([
                str(r.query_id), f"{r.cost_without_jit:.4f}", f"{r.cost_with_jit:.4f}", r.index_created,
                r.scan_object_before, r.scan_object_after, f"{r.wall_ms_first:.1f}",
                f"{r.wall_ms_second:.1f}", f"{r.path_first}/{r.path_second}" + ("" if r.executed else " (compile-only)"),
            ])
        widths = [max(len(row[i]) for row in lines) for i in range(len(header))]
        out = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in lines]
        out.insert(1, "  ".join("-" * w for w in widths))
        for r in self.rows:
            out.append(f"  Q{r.query_id}: {r.sql}")
        return "\n".join(out)


def _csv_value(v):
    if isinstance(v, float):
        return f"{v:.4f}"
    if isinstance(v, bool):
        return int(v)
    return v


def run_benchmark(
    engine: JitEngine,
    queries=BENCHMARK_QUERIES,
    max_result_rows: int = DEFAULT_MAX_RESULT_ROWS,
) -> BenchReport:
    """Run each query with JIT off, then twice (cold, warm) with JIT on.

    The JIT index registry is reset before every query so each row reflects
    that query alone. Queries whose estimated result exceeds
    *max_result_rows* are processed in compile-only mode.
    """
    for q in queries:
        for t in parse(q).tables:
            if t not in engine.catalog or engine.catalog.table(t).row_count == 0:
                raise DatasetMissingError(f"table {t} is missing or empty; generate the dataset first")
    report = BenchReport()
    was_enabled = engine.config.enabled
    try:
        for qid, sql in enumerate(queries, 1):
            engine.reset_jit()
            estimate = engine.planner.plan(engine.catalog.bind(parse(sql)), engine.registry.conventional)
            execute = estimate.out_rows <= max_result_rows

            engine.configure(enabled=False)
            off = engine.process_query(sql, execute=execute)
            engine.configure(enabled=True)
            t0 = time.perf_counter()
            cold = engine.process_query(sql, execute=execute)
            t1 = time.perf_counter()
            warm = engine.process_query(sql, execute=execute)
            t2 = time.perf_counter()
            created = engine.indexes.descriptors.get(cold.created[0]) if cold.created else None
            report.rows.append(BenchRow(
                qid, cold.query, off.indexed_cost.pages, cold.indexed_cost.pages,
                created.label if created else "-",
                off.scan_object, cold.scan_object,
                (t1 - t0) * 1000, (t2 - t1) * 1000, cold.path, warm.path, execute,
            ))
            report.explain += [off.report.text, cold.report.text, warm.report.text]
    finally:
        engine.configure(enabled=was_enabled)
    return report


# -- statistics tables ---------------------------------------------------------


def export_stats(engine: JitEngine, directory: str | os.PathLike) -> int:
    """Write the query-history and EXPLAIN tables; returns the history row count."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with (d / HISTORY_FILE).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_SCHEMA.column_names)
        for seq, h in enumerate(engine.history, 1):
            w.writerow([
                seq, h.timestamp, h.query_hash, h.query, f"{h.unindexed_cost:.4f}",
                round(h.unindexed_cost), h.normalized_cost, h.threshold, int(h.triggered),
                h.path, h.index_used or "-", f"{h.indexed_cost:.4f}",
            ])
    with (d / EXPLAIN_FILE).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EXPLAIN_SCHEMA.column_names)
        for seq, rep in enumerate(engine.explain_log, 1):
            p = rep.chosen_plan
            w.writerow([
                seq, rep.query, plan_kind(p), plan_object(p), plan_index_label(p),
                f"{p.cost.pages:.4f}", round(p.cost.pages), round(p.out_rows), rep.scan_object,
                "EXECUTED" if rep.executed else "COMPILE_ONLY", len(rep.alternatives),
            ])
    return len(engine.history)


def load_stats_tables(
    catalog: Catalog, directory: str | os.PathLike, indexes: IndexManager | None = None
) -> tuple[int, int]:
    """Load exported statistics back as queryable tables (replacing old copies).

    Pass *indexes* when the catalog belongs to a live engine so that indexes
    on replaced tables are dropped with them.
    """
    d = Path(directory)
    counts = []
    for schema, name in ((HISTORY_SCHEMA, HISTORY_FILE), (EXPLAIN_SCHEMA, EXPLAIN_FILE)):
        if schema.name in catalog:
            if indexes is not None:
                for ix in list(indexes.descriptors.values()):
                    if ix.table == schema.name:
                        indexes.drop_index(ix.id)
            catalog.drop_table(schema.name)
        catalog.create_table(schema)
        counts.append(catalog.load_csv(d / name, schema.name))
    return counts[0], counts[1]
