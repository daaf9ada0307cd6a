"""An embedded SQL-subset engine with just-in-time adaptive indexing."""

from .bench import BenchReport, export_stats, load_stats_tables, run_benchmark
from .catalog import Catalog, ColumnStats, TableSchema
from .dataset import BENCHMARK_QUERIES, DatasetSpec, generate_dataset
from .errors import EngineError, QueryError
from .executor import Executor, ResultSet
from .index import IndexDescriptor, IndexManager, IndexStats
from .jit import (
    BELOW_THRESHOLD,
    INDEX_CREATED,
    INDEX_REJECTED,
    JIT_DISABLED,
    SCANNER_HIT,
    ExecutionOutcome,
    JitConfig,
    JitEngine,
    current_threshold,
    normalized_cost,
)
from .planner import CostEstimate, CostModel, ExplainReport, Planner
from .sql import QueryAst, parse, render

__all__ = [
    "BELOW_THRESHOLD", "INDEX_CREATED", "INDEX_REJECTED", "JIT_DISABLED", "SCANNER_HIT",
    "BENCHMARK_QUERIES", "BenchReport", "Catalog", "ColumnStats", "CostEstimate", "CostModel",
    "DatasetSpec", "EngineError", "ExecutionOutcome", "Executor", "ExplainReport", "IndexDescriptor",
    "IndexManager", "IndexStats", "JitConfig", "JitEngine", "Planner", "QueryAst", "QueryError",
    "ResultSet", "TableSchema", "current_threshold", "export_stats", "generate_dataset",
    "load_stats_tables", "normalized_cost", "parse", "render", "run_benchmark",
]
