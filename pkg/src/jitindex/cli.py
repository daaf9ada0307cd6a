"""Command-line driver: one-shot queries, the benchmark, and an interactive REPL.

Exit codes: 0 success, 1 query error, 2 configuration or I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import TextIO

from .bench import export_stats, run_benchmark
from .catalog import MANIFEST_NAME, Catalog
from .dataset import DatasetSpec, generate_dataset
from .errors import EngineError
from .executor import ResultSet
from .jit import JitConfig, JitEngine

EXIT_OK = 0
EXIT_QUERY = 1
EXIT_CONFIG = 2

REPL_HELP = """\
commands:
  <sql>                  run a query through the JIT pipeline
  \\explain <sql>         compile-only EXPLAIN (no JIT, no execution)
  \\indexes               list real indexes (JIT stack in LRU order)
  \\stats [table]         column statistics and usage counts
  \\gen <rows> <seed>     regenerate the exam dataset
  \\jit on|off            toggle just-in-time indexing
  \\bench                 run the four-query benchmark
  \\export <dir>          write the history/EXPLAIN statistics tables
  \\help                  this message
  \\q                     quit"""


def render_result(rs: ResultSet, limit: int = 20) -> str:
    lines = [" | ".join(rs.columns)]
    for row in rs.rows[:limit]:
        lines.append(" | ".join(str(v) for v in row))
    more = f", showing {limit}" if len(rs.rows) > limit else ""
    lines.append(f"({len(rs.rows)} rows{more}; {rs.actual_pages:.4f} pages)")
    return "\n".join(lines)


def render_indexes(engine: JitEngine) -> str:
    reg = engine.registry
    lines = []
    for d in reg.conventional + reg.live:
        s = d.stats
        lines.append(
            f"{d.id} kind={d.kind} {d.table}.{d.label} last_used={d.last_used} created_at={d.created_at} "
            f"key_ndv={s.key_ndv} leaf_pages={s.leaf_pages} height={s.height} size_bytes={s.size_bytes}"
        )
    lines.append(f"({len(reg.live)}/{engine.config.capacity} JIT, {len(reg.conventional)} conventional)")
    return "\n".join(lines)


def render_stats(engine: JitEngine, table: str | None = None) -> str:
    lines = []
    names = [table.upper()] if table else sorted(engine.catalog.tables)
    for name in names:
        t = engine.catalog.table(name)
        lines.append(f"{name}: rows={t.row_count} row_width={t.schema.row_width_bytes}")
        for c in t.schema.columns:
            s = t.stats(c.name)
            if table is None and s.usage_count == 0:
                continue
            rng = "" if s.min_val is None else f" min={s.min_val} max={s.max_val}"
            lines.append(f"  {c.name} ndv={s.ndv}{rng} usage={s.usage_count}")
    return "\n".join(lines)


class Repl:
    """Line-oriented command interpreter; state survives any command error."""

    def __init__(self, engine: JitEngine, out: TextIO = sys.stdout, limit: int = 20, data_dir=None):
        self.engine = engine
        self.out = out
        self.limit = limit
        self.data_dir = data_dir

    def say(self, text: str) -> None:
        print(text, file=self.out)

    def handle(self, line: str) -> bool:
        """Execute one input line; returns False when the session should end."""
        line = line.strip()
        if not line:
            return True
        try:
            if line.startswith("\\"):
                return self._meta(line)
            outcome = self.engine.process_query(line)
            self.say(render_result(outcome.result, self.limit))
            self.say(f"path={outcome.path} index={outcome.index_used or '-'} "
                     f"A={outcome.normalized_cost} B={outcome.threshold} "
                     f"cost={outcome.indexed_cost.pages:.4f} unindexed={outcome.unindexed_cost.pages:.4f}")
        except (EngineError, OSError, ValueError) as exc:
            self.say(f"error: {exc}")
        return True

    def _meta(self, line: str) -> bool:
        cmd, _, arg = line.partition(" ")
        arg = arg.strip()
        if cmd == "\\q":
            return False
        if cmd == "\\help":
            self.say(REPL_HELP)
        elif cmd == "\\explain" and arg:
            self.say(self.engine.explain(arg).text)
        elif cmd == "\\indexes" and not arg:
            self.say(render_indexes(self.engine))
        elif cmd == "\\stats":
            self.say(render_stats(self.engine, arg or None))
        elif cmd == "\\gen" and len(arg.split()) == 2:
            rows, seed = (int(x) for x in arg.split())
            self.engine = rebuild_engine(self.engine, DatasetSpec(rows_per_table=rows, seed=seed))
            self.say(f"generated {len(self.engine.catalog.tables)} tables x {rows} rows (seed {seed})")
        elif cmd == "\\jit" and arg in ("on", "off"):
            self.engine.configure(enabled=arg == "on")
            self.say(f"jit {arg}")
        elif cmd == "\\bench" and not arg:
            report = run_benchmark(self.engine)
            self.say(report.to_table())
        elif cmd == "\\export" and arg:
            n = export_stats(self.engine, arg)
            self.say(f"exported {n} history rows to {arg}")
        else:
            self.say(f"unknown or malformed command: {line}\n{REPL_HELP}")
        return True

    def run(self, stream: TextIO = sys.stdin, prompt: bool = True) -> int:
        interactive = prompt and stream.isatty()
        while True:
            if interactive:
                print("jit> ", end="", file=self.out, flush=True)
            line = stream.readline()
            if not line:
                return EXIT_OK
            if not self.handle(line):
                return EXIT_OK


def rebuild_engine(old: JitEngine, spec: DatasetSpec) -> JitEngine:
    catalog = Catalog()
    generate_dataset(spec, catalog)
    return JitEngine(catalog, old.config)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="jitindex", description=__doc__.splitlines()[0])
    p.add_argument("--data-dir", type=Path, help="catalog directory to load, or to save a generated dataset into")
    p.add_argument("--rows", type=int, default=100_000, help="rows per generated table")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--config", type=Path, help="key=value configuration file")
    p.add_argument("--jit", choices=("on", "off"))
    p.add_argument("--threshold", type=int, help="static alert threshold")
    p.add_argument("--threshold-mode", choices=("static", "dynamic"))
    p.add_argument("--norm-unit", type=float, help="pages per normalized cost unit")
    p.add_argument("--capacity", type=int, help="maximum live JIT indexes")
    p.add_argument("--p", dest="p", type=int, help="frequency-rank cutoff")
    p.add_argument("--m", dest="m", type=int, help="uniqueness-rank cutoff")
    p.add_argument("--mprime", type=int, help="maximum columns per candidate index")
    p.add_argument("--tprime", type=int, help="candidates costed as hypothetical indexes")
    p.add_argument("--fetch-factor", type=float)
    p.add_argument("--bench", action="store_true", help="run the four-query benchmark")
    p.add_argument("--bench-csv", type=Path, help="also write the benchmark report as CSV")
    p.add_argument("--export-stats", type=Path, metavar="DIR", help="write history/EXPLAIN tables")
    p.add_argument("--sql", help="run one query and exit")
    p.add_argument("--compile-only", action="store_true", help="plan --sql without executing it")
    p.add_argument("--limit", type=int, default=20, help="result rows to print")
    p.add_argument("-v", "--verbose", action="store_true", help="log JIT events")
    return p


def config_from_args(args: argparse.Namespace) -> JitConfig:
    cfg = JitConfig.from_file(args.config) if args.config else JitConfig()
    overrides = {
        "enabled": None if args.jit is None else args.jit == "on",
        "static_threshold": args.threshold,
        "threshold_mode": args.threshold_mode,
        "norm_unit": args.norm_unit,
        "capacity": args.capacity,
        "frequency_cutoff": args.p,
        "uniqueness_cutoff": args.m,
        "max_index_width": args.mprime,
        "candidates_evaluated": args.tprime,
        "fetch_factor": args.fetch_factor,
    }
    return cfg.updated({k: v for k, v in overrides.items() if v is not None})


def load_engine(args: argparse.Namespace, cfg: JitConfig) -> JitEngine:
    if args.data_dir is not None and (args.data_dir / MANIFEST_NAME).is_file():
        return JitEngine(Catalog.load(args.data_dir), cfg)
    catalog = Catalog()
    generate_dataset(DatasetSpec(rows_per_table=args.rows, seed=args.seed), catalog)
    if args.data_dir is not None:
        catalog.save(args.data_dir)
    return JitEngine(catalog, cfg)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        cfg = config_from_args(args)
        engine = load_engine(args, cfg)
    except (OSError, ValueError, EngineError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    status = EXIT_OK
    try:
        if args.sql:
            outcome = engine.process_query(args.sql, execute=not args.compile_only)
            print(outcome.report.text)
            if outcome.result is not None:
                print(render_result(outcome.result, args.limit))
            print(f"path={outcome.path} index={outcome.index_used or '-'} "
                  f"A={outcome.normalized_cost} B={outcome.threshold}")
        if args.bench:
            report = run_benchmark(engine)
            print(report.to_table())
            if args.bench_csv:
                args.bench_csv.write_text(report.to_csv(), encoding="utf-8")
        if not args.sql and not args.bench and args.export_stats is None:
            status = Repl(engine, limit=args.limit, data_dir=args.data_dir).run()
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        status = EXIT_QUERY

    if args.export_stats is not None:
        try:
            n = export_stats(engine, args.export_stats)
            print(f"exported {n} history rows to {args.export_stats}")
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    return status


if __name__ == "__main__":
    sys.exit(main())
