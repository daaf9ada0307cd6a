"""Just-in-time indexing: threshold alert, index scanner, heuristic indexer.

:class:`JitEngine` owns the catalog, the index manager, the planner and the
executor and routes each query through the alert -> scanner -> indexer
pipeline before executing it.

Alert
    The query is planned with conventional indexes only. Its estimated page
    count, normalized to an integer score, is compared with the threshold
    (static, or the running mean of past scores).
Scanner
    If any real index (JIT or conventional) gives a plan cheaper than the
    conventional one, the query runs through it and no index is built.
Indexer
    Candidate column lists are drawn from the query's indexable columns,
    pruned by usage frequency, uniqueness and a savings-vs-maintenance
    bound, then costed as statistics-only indexes. The winner is built for
    real if it beats the unindexed plan. Live JIT indexes form an LRU stack
    bounded by ``capacity``.
"""

from __future__ import annotations

import hashlib
import itertools
import logging
import math
import threading
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Mapping

from .catalog import BoundQuery, Catalog
from .errors import EngineError, QueryError
from .executor import Executor, ResultSet
from .index import CONVENTIONAL, HYPOTHETICAL, JIT, REAL, IndexDescriptor, IndexManager, IndexStats, LogicalClock
from .planner import CostEstimate, CostModel, ExplainReport, PlanNode, Planner, plan_indexes, uses_only_real
from .sql import parse, render

log = logging.getLogger(__name__)

BELOW_THRESHOLD = "below-threshold"
SCANNER_HIT = "scanner-hit"
INDEX_CREATED = "index-created"
INDEX_REJECTED = "index-rejected"
JIT_DISABLED = "jit-disabled"

STATIC = "static"
DYNAMIC = "dynamic"

# Config-file aliases matching the CLI flag names.
_ALIASES = {
    "p": "frequency_cutoff",
    "m": "uniqueness_cutoff",
    "mprime": "max_index_width",
    "tprime": "candidates_evaluated",
    "threshold": "static_threshold",
    "capacity": "capacity",
    "jit": "enabled",
}


@dataclass
class JitConfig:
    enabled: bool = True
    threshold_mode: str = STATIC
    static_threshold: int = 2
    norm_unit: float = 1000.0
    frequency_cutoff: int = 8
    uniqueness_cutoff: int = 6
    max_index_width: int = 3
    candidates_evaluated: int = 4
    capacity: int = 8
    fetch_factor: float = 1.0
    page_size: int = 8192
    fan_out: int = 256
    expected_reuse: float = 3.0
    update_cost: float = 0.0
    update_rate: float = 0.0
    frequency_order: str = "descending"
    log_window: int = 100

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.threshold_mode not in (STATIC, DYNAMIC):
            raise ValueError(f"threshold_mode must be static or dynamic, not {self.threshold_mode!r}")
        if self.frequency_order not in ("descending", "ascending"):
            raise ValueError("frequency_order must be descending or ascending")
        for name in ("static_threshold", "frequency_cutoff", "uniqueness_cutoff", "max_index_width",
                     "candidates_evaluated", "capacity", "page_size", "fan_out", "log_window"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.fan_out < 2:
            raise ValueError("fan_out must be >= 2")
        if self.norm_unit <= 0 or self.fetch_factor < 0 or self.expected_reuse <= 0:
            raise ValueError("norm_unit and expected_reuse must be positive, fetch_factor non-negative")
        if not self.max_index_width <= self.uniqueness_cutoff <= self.frequency_cutoff:
            raise ValueError("need max_index_width <= uniqueness_cutoff <= frequency_cutoff")

    @property
    def cost_model(self) -> CostModel:
        return CostModel(self.page_size, self.fan_out, self.fetch_factor)

    def updated(self, values: Mapping[str, object]) -> "JitConfig":
        """A copy with *values* (strings allowed) applied and validated."""
        current = asdict(self)
        types = {f.name: f.type for f in fields(self)}
        for key, raw in values.items():
            key = key.strip().lower().replace("-", "_")
            key = _ALIASES.get(key, key)
            if key not in types:
                raise ValueError(f"unknown configuration key {key!r}")
            current[key] = _coerce(raw, types[key])
        return JitConfig(**current)

    @classmethod
    def from_file(cls, path: str | Path) -> "JitConfig":
        values = {}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
        return cls().updated(values)

    def to_text(self) -> str:
        return "\n".join(f"{k}={_fmt(v)}" for k, v in asdict(self).items()) + "\n"


def _coerce(raw, type_name: str):
    if not isinstance(raw, str):
        return raw
    if type_name == "bool":
        v = raw.strip().lower()
        if v in ("1", "true", "on", "yes"):
            return True
        if v in ("0", "false", "off", "no"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if type_name == "int":
        return int(raw)
    if type_name == "float":
        return float(raw)
    return raw.strip()


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "on" if v else "off"
    return str(v)


@dataclass
class QueryHistoryEntry:
    query: str
    normalized_cost: int
    timestamp: int
    triggered: bool
    unindexed_cost: float = 0.0
    threshold: int = 0
    path: str = ""
    index_used: str | None = None
    indexed_cost: float = 0.0
    bound: BoundQuery | None = field(default=None, repr=False, compare=False)

    @property
    def query_hash(self) -> str:
        return query_hash(self.query)


@dataclass
class CandidateIndex:
    table: str
    columns: tuple[str, ...]
    pages_saved_upper_bound: float
    maintenance_cost: float
    hypo_stats: IndexStats | None = None

    @property
    def benefit_ratio(self) -> float:
        return self.pages_saved_upper_bound / self.maintenance_cost if self.maintenance_cost else math.inf

    @property
    def label(self) -> str:
        return "index(" + ",".join(c.lower() for c in self.columns) + ")"


@dataclass(frozen=True)
class Selection:
    table: str
    columns: tuple[str, ...]
    cost: CostEstimate
    stats: IndexStats


@dataclass
class ExecutionOutcome:
    query: str
    result: ResultSet | None
    unindexed_cost: CostEstimate
    indexed_cost: CostEstimate
    path: str
    index_used: str | None
    normalized_cost: int
    threshold: int
    plan: PlanNode
    report: ExplainReport
    created: list[str] = field(default_factory=list)
    evicted: list[str] = field(default_factory=list)

    @property
    def scan_object(self) -> str:
        return self.report.scan_object


@dataclass(frozen=True)
class JitEvent:
    phase: str
    query_hash: str
    a: int
    b: int
    path: str
    index: str | None

    def __str__(self) -> str:
        return (
            f"JIT {self.phase} query={self.query_hash} A={self.a} B={self.b} "
            f"path={self.path} index={self.index or '-'}"
        )


@dataclass(frozen=True)
class LedgerEntry:
    """Modeled page cost charged to a query: an index build or an execution."""

    timestamp: int
    query_hash: str
    kind: str  # "build" | "execute"
    pages: float
    unindexed_pages: float


def query_hash(canonical: str) -> str:
    return hashlib.sha1(canonical.encode("utf-8")).hexdigest()[:12]


def normalized_cost(cost: CostEstimate | float, cfg: JitConfig) -> int:
    pages = cost.pages if isinstance(cost, CostEstimate) else float(cost)
    if pages < 0:
        raise ValueError("cost must be non-negative")
    return math.ceil(pages / cfg.norm_unit)


def current_threshold(cfg: JitConfig, history: Iterable[QueryHistoryEntry | int]) -> int:
    if cfg.threshold_mode == STATIC:
        return cfg.static_threshold
    values = [h.normalized_cost if isinstance(h, QueryHistoryEntry) else int(h) for h in history]
    if not values:
        return cfg.static_threshold
    # half-up rounding of the running mean
    return math.floor(sum(values) / len(values) + 0.5)


class IndexRegistry:
    """View of the index manager split into the JIT LRU stack and conventional indexes."""

    def __init__(self, indexes: IndexManager):
        self.indexes = indexes

    @property
    def live(self) -> list[IndexDescriptor]:
        return sorted(
            self.indexes.real_indexes(kind=JIT), key=lambda d: (d.last_used, d.created_at, d.id)
        )

    @property
    def conventional(self) -> list[IndexDescriptor]:
        return sorted(self.indexes.real_indexes(kind=CONVENTIONAL), key=lambda d: d.id)

    def all_real(self) -> list[IndexDescriptor]:
        return self.conventional + self.live

    def hypothetical(self) -> list[IndexDescriptor]:
        return self.indexes.hypothetical_indexes()


class JitEngine:
    """An embedded database whose query path includes just-in-time indexing."""

    def __init__(self, catalog: Catalog | None = None, config: JitConfig | None = None):
        self.config = config or JitConfig()
        self.catalog = catalog or Catalog()
        self.clock = LogicalClock()
        self.indexes = IndexManager(self.catalog, self.clock, self.config.page_size, self.config.fan_out)
        self.planner = Planner(self.catalog, self.config.cost_model)
        self.executor = Executor(self.catalog, self.indexes, self.planner)
        self.registry = IndexRegistry(self.indexes)
        self.history: list[QueryHistoryEntry] = []
        self.events: list[JitEvent] = []
        self.eviction_log: list[str] = []
        self.ledger: list[LedgerEntry] = []
        self.explain_log: list[ExplainReport] = []
        self._lock = threading.RLock()

    # -- configuration ------------------------------------------------------

    def configure(self, **values) -> None:
        cfg = self.config.updated(values)
        physical = (cfg.page_size, cfg.fan_out) != (self.config.page_size, self.config.fan_out)
        if physical and self.indexes.descriptors:
            raise EngineError("page_size/fan_out cannot change while indexes exist")
        self.config = cfg
        self.indexes.page_size, self.indexes.fan_out = cfg.page_size, cfg.fan_out
        self.planner.model = cfg.cost_model

    def reset_jit(self, clear_history: bool = False) -> None:
        """Drop every JIT index; optionally forget the query history too."""
        with self._lock:
            for d in self.registry.live:
                self.indexes.drop_index(d.id)
            if clear_history:
                self.history.clear()

    # -- EXPLAIN ------------------------------------------------------------

    def explain(self, text: str, execute: bool = False) -> ExplainReport:
        """Plan *text* against the real indexes without any JIT activity."""
        try:
            bq = self.catalog.bind(parse(text))
            report = self.planner.explain(bq, self.registry.all_real(), executed=execute)
            if execute:
                self.executor.execute(report.chosen_plan)
        except EngineError as exc:
            raise QueryError(text, exc) from exc
        self.explain_log.append(report)
        return report

    # -- scanner ------------------------------------------------------------

    def scan_for_index(self, q: BoundQuery) -> IndexDescriptor | None:
        """Best existing real index the planner would use for *q*, if any."""
        plan = self.planner.plan(q, self.registry.all_real())
        scans = plan_indexes(plan)
        if not scans:
            return None
        # prefer the join lookup side (it dominates join cost), else the base access
        scans.sort(key=lambda s: (not s.is_lookup,))
        hit = self.indexes.get(scans[0].index_id)
        self.indexes.touch(hit)
        return hit

    # -- indexer ------------------------------------------------------------

    def _domains(self, q: BoundQuery) -> list[tuple[str, str]]:
        cols: list[tuple[str, str]] = []
        for p in q.where:
            if p.sargable and (p.lhs.table, p.lhs.column) not in cols:
                cols.append((p.lhs.table, p.lhs.column))
        if q.join_right is not None:
            key = (q.join_right.table, q.join_right.column)
            if key not in cols:
                cols.append(key)
        return cols

    def _uniqueness(self, table: str, column: str) -> float:
        t = self.catalog.table(table)
        return t.stats(column).ndv / t.row_count if t.row_count else 0.0

    def _log_queries(self, q: BoundQuery) -> list[tuple[BoundQuery, int]]:
        """Distinct recent queries (with multiplicity), always including *q*."""
        counts: dict[str, list] = {}
        window = self.history[-self.config.log_window:]
        for h in window:
            if h.bound is not None:
                entry = counts.setdefault(h.query, [h.bound, 0])
                entry[1] += 1
        key = render(q.ast)
        if key not in counts:
            counts[key] = [q, 1]
        return [(bq, n) for bq, n in counts.values()]

    def _pages_saved(self, table: str, columns: tuple[str, ...], workload, conventional) -> float:
        """Gross upper bound on pages an index on *columns* saves over *workload*.

        Each query is costed against a best-case probe that reads no tree or
        leaf pages, so only the matching heap fraction is charged.
        """
        est = self.indexes.estimate_index(table, columns)
        # costing device only; never registered
        best_case = IndexStats(est.key_ndv, 0, 0, est.size_bytes)
        probe = IndexDescriptor(f"EST_{table}_{'_'.join(columns)}", table, columns, HYPOTHETICAL, JIT, best_case)
        saved = 0.0
        for bq, weight, base_cost in workload:
            if table not in (bq.base, bq.right):
                continue
            with_ix = self.planner.plan(bq, conventional + [probe]).cost.pages
            saved += weight * max(0.0, base_cost - with_ix)
        return saved

    def _key_order(self, q: BoundQuery, table: str, columns) -> tuple[str, ...]:
        """Equality columns first, then range columns by selectivity; ties by uniqueness."""
        eq, rng = set(), {}
        for p in q.local_predicates(table):
            if not p.sargable:
                continue
            if p.op == "=":
                eq.add(p.lhs.column)
            else:
                sel = self.planner.predicate_selectivity(p)
                rng[p.lhs.column] = min(sel, rng.get(p.lhs.column, 1.0))
        if q.join_right is not None and q.join_right.table == table:
            eq.add(q.join_right.column)

        def key(col):
            if col in eq:
                return (0, 0.0, -self._uniqueness(table, col), col)
            return (1, rng.get(col, 1.0), -self._uniqueness(table, col), col)

        return tuple(sorted(columns, key=key))

    def generate_candidates(self, q: BoundQuery) -> list[CandidateIndex]:
        cfg = self.config
        domains = self._domains(q)
        if not domains:
            return []

        def usage(d):
            return self.catalog.table(d[0]).usage[d[1]]

        sign = -1 if cfg.frequency_order == "descending" else 1
        by_freq = sorted(domains, key=lambda d: (sign * usage(d), -self._uniqueness(*d), d))
        kept = by_freq[: cfg.frequency_cutoff]
        by_unique = sorted(kept, key=lambda d: (-self._uniqueness(*d), -usage(d), d))
        kept = by_unique[: cfg.uniqueness_cutoff]
        rank = {d: i for i, d in enumerate(by_unique)}

        conventional = self.registry.conventional
        workload = [
            (bq, n, self.planner.plan(bq, conventional).cost.pages) for bq, n in self._log_queries(q)
        ]
        candidates = []
        for table in sorted({t for t, _ in kept}):
            cols = sorted((d for d in kept if d[0] == table), key=rank.__getitem__)
            maintenance = (
                self.planner.cost_table_scan(table).pages / cfg.expected_reuse
                + cfg.update_cost * cfg.update_rate
            )
            for width in range(1, min(cfg.max_index_width, len(cols)) + 1):
                for combo in itertools.combinations(cols, width):
                    columns = self._key_order(q, table, (c for _, c in combo))
                    saved = self._pages_saved(table, columns, workload, conventional)
                    if saved < maintenance:
                        continue
                    candidates.append(CandidateIndex(table, columns, saved, maintenance))
        candidates.sort(key=lambda c: (-c.benefit_ratio, len(c.columns), c.table, c.columns))
        return candidates[: cfg.candidates_evaluated]

    def select_best_index(self, candidates: list[CandidateIndex], q: BoundQuery) -> Selection | None:
        """Cost each candidate as a statistics-only index and return the winner.

        All hypothetical indexes are dropped before returning. Returns None
        when no candidate beats the plan without it.
        """
        if not candidates:
            return None
        real = self.registry.all_real()
        baseline = self.planner.plan(q, real).cost
        hypos: list[tuple[CandidateIndex, IndexDescriptor]] = []
        try:
            for cand in candidates:
                hypo = self.indexes.build_index(cand.table, cand.columns, HYPOTHETICAL, JIT)
                cand.hypo_stats = hypo.stats
                hypos.append((cand, hypo))
            scored = []
            for cand, hypo in hypos:
                plan = self.planner.plan(q, real + [hypo])
                if hypo.id not in {s.index_id for s in plan_indexes(plan)}:
                    continue
                scored.append((plan.cost.pages, hypo.stats.size_bytes, len(cand.columns), cand.columns, cand))
        finally:
            for _, hypo in hypos:
                self.indexes.drop_index(hypo.id)
        if not scored:
            return None
        cost, _, _, _, best = min(scored, key=lambda s: s[:4])
        if cost >= baseline.pages:
            return None
        return Selection(best.table, best.columns, CostEstimate(cost), best.hypo_stats)

    def evict_if_needed(self) -> list[str]:
        dropped = []
        live = self.registry.live
        while len(live) > self.config.capacity:
            victim = live.pop(0)
            self.indexes.drop_index(victim.id)
            dropped.append(victim.id)
            self.eviction_log.append(victim.id)
        return dropped

    # -- main loop ----------------------------------------------------------

    def _event(self, phase, qh, a, b, path, index=None) -> None:
        ev = JitEvent(phase, qh, a, b, path, index)
        self.events.append(ev)
        log.info("%s", ev)

    def process_query(self, text: str, execute: bool = True) -> ExecutionOutcome:
        """Run one query through alert, scanner and indexer, then execute it.

        With ``execute=False`` the whole JIT pipeline still runs (including
        index creation) but the final plan is only compiled.
        """
        with self._lock:
            try:
                return self._process(text, execute)
            except EngineError as exc:
                raise QueryError(text, exc) from exc

    def _process(self, text: str, execute: bool) -> ExecutionOutcome:
        cfg = self.config
        bq = self.catalog.bind(parse(text))
        self.catalog.record_column_usage(bq)
        canonical = render(bq.ast)
        qh = query_hash(canonical)
        ts = self.clock.tick()

        unindexed = self.planner.plan(bq, self.registry.conventional).cost
        a = normalized_cost(unindexed, cfg)
        b = current_threshold(cfg, self.history)
        triggered = cfg.enabled and a > b
        created: list[str] = []
        evicted: list[str] = []
        index_used = None

        if not cfg.enabled:
            path = JIT_DISABLED
        elif not triggered:
            path = BELOW_THRESHOLD
            self._event("ALERT", qh, a, b, path)
        else:
            self._event("ALERT", qh, a, b, "triggered")
            hit = self.scan_for_index(bq)
            if hit is not None:
                path, index_used = SCANNER_HIT, hit.id
                self._event("SCAN", qh, a, b, path, hit.id)
            else:
                self._event("SCAN", qh, a, b, "no-match")
                choice = self.select_best_index(self.generate_candidates(bq), bq)
                if choice is not None and choice.cost.pages < unindexed.pages:
                    desc = self.indexes.build_index(choice.table, choice.columns, REAL, JIT)
                    created.append(desc.id)
                    index_used = desc.id
                    path = INDEX_CREATED
                    self.ledger.append(
                        LedgerEntry(ts, qh, "build", self.planner.cost_table_scan(desc.table).pages, unindexed.pages)
                    )
                    self._event("INDEX", qh, a, b, path, desc.id)
                    for victim in self.evict_if_needed():
                        evicted.append(victim)
                        self._event("EVICT", qh, a, b, "evicted", victim)
                else:
                    path = INDEX_REJECTED
                    self._event("INDEX", qh, a, b, path)

        report = self.planner.explain(bq, self.registry.all_real(), executed=execute)
        plan = report.chosen_plan
        if not uses_only_real(plan):
            raise EngineError("planner produced a plan over a hypothetical index")
        if index_used is None and path in (BELOW_THRESHOLD, JIT_DISABLED):
            scans = plan_indexes(plan)
            index_used = scans[0].index_id if scans else None
        result = self.executor.execute(plan) if execute else None
        self.explain_log.append(report)
        self.ledger.append(LedgerEntry(ts, qh, "execute", plan.cost.pages, unindexed.pages))
        self.history.append(
            QueryHistoryEntry(canonical, a, ts, triggered, unindexed.pages, b, path, index_used,
                              plan.cost.pages, bq)
        )
        return ExecutionOutcome(
            canonical, result, unindexed, plan.cost, path, index_used, a, b, plan, report, created, evicted
        )
