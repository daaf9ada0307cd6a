"""Synthetic exam-marks dataset: five subject tables of identical shape.

Each row is one student: id, a three-letter name, marks for 65 questions,
their total and the dense rank of that total within the subject.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .catalog import Catalog, Table, TableSchema, write_table_csv
from .errors import DuplicateTableError

SUBJECT_TABLES = ("PHYSICSMARKS", "CHEMISTRYMARKS", "MATHSMARKS", "BIOLOGYMARKS", "ENGLISHMARKS")
N_QUESTIONS = 65

BENCHMARK_QUERIES = (
    "select * from physicsmarks where m1 = 1",
    "select * from physicsmarks where m1 = 2 and m2 = 1",
    "select * from physicsmarks where m1 = m2",
    "select * from chemistrymarks INNER JOIN physicsmarks on chemistrymarks.m1 = physicsmarks.m1",
)


def exam_schema(name: str) -> TableSchema:
    cols = [("P_ID", "integer"), ("FIRST_NAME", "text")]
    cols += [(f"M{i}", "integer") for i in range(1, N_QUESTIONS + 1)]
    cols += [("TOTAL", "integer"), ("RANK", "integer")]
    return TableSchema.of(name, cols)


@dataclass(frozen=True)
class DatasetSpec:
    rows_per_table: int = 100_000
    marks_range: tuple[int, int] = (0, 4)
    seed: int = 42
    tables: tuple[str, ...] = SUBJECT_TABLES

    def __post_init__(self):
        if self.rows_per_table < 0:
            raise ValueError("rows_per_table must be >= 0")
        lo, hi = self.marks_range
        if lo > hi:
            raise ValueError("marks_range must be (low, high) with low <= high")


def generate_rows(spec: DatasetSpec, table_index: int) -> list[tuple]:
    rows = spec.rows_per_table
    if rows == 0:
        return []
    rng = np.random.default_rng([spec.seed, table_index])
    lo, hi = spec.marks_range
    marks = rng.integers(lo, hi + 1, size=(rows, N_QUESTIONS), dtype=np.int64)
    letters = rng.integers(0, 26, size=(rows, 3), dtype=np.uint8) + ord("a")
    names = [b.decode("ascii") for b in letters.view("S3").ravel()]
    total = marks.sum(axis=1)
    distinct = np.unique(total)
    rank = len(distinct) - np.searchsorted(distinct, total)
    marks_l = marks.tolist()
    total_l = total.tolist()
    rank_l = rank.tolist()
    return [
        (pid, names[i], *marks_l[i], total_l[i], rank_l[i])
        for i, pid in enumerate(range(1, rows + 1))
    ]


def generate_dataset(
    spec: DatasetSpec,
    catalog: Catalog,
    overwrite: bool = False,
    data_dir: str | Path | None = None,
) -> list[Table]:
    """Create and fill the subject tables; optionally write one CSV per table."""
    existing = [t for t in spec.tables if t in catalog]
    if existing and not overwrite:
        raise DuplicateTableError(f"tables already exist: {', '.join(existing)}")
    for name in existing:
        catalog.drop_table(name)
    tables = []
    for i, name in enumerate(spec.tables):
        table = catalog.create_table(exam_schema(name))
        catalog.insert_rows(name, generate_rows(spec, i), validate=False)
        tables.append(table)
    if data_dir is not None:
        d = Path(data_dir)
        d.mkdir(parents=True, exist_ok=True)
        for t in tables:
            write_table_csv(t, d / f"{t.name}.csv")
    return tables
