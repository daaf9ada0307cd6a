import random

import pytest

from jitindex.catalog import Catalog, TableSchema
from jitindex.jit import JitConfig, JitEngine


def int_table(catalog: Catalog, name: str, columns, rows: int, ndv, seed: int = 0):
    """Create *name* with integer *columns* filled uniformly from range(ndv)."""
    catalog.create_table(TableSchema.of(name, [(c, "integer") for c in columns]))
    rng = random.Random(seed)
    widths = ndv if isinstance(ndv, (list, tuple)) else [ndv] * len(columns)
    data = [tuple(rng.randrange(w) for w in widths) for _ in range(rows)]
    catalog.insert_rows(name, data)
    return data


@pytest.fixture
def small_catalog():
    cat = Catalog()
    int_table(cat, "T", ["A", "B", "C"], 1000, [5, 50, 200], seed=1)
    int_table(cat, "U", ["A", "D"], 300, [5, 10], seed=2)
    return cat


@pytest.fixture
def small_engine(small_catalog):
    # tiny norm_unit so 1000-row tables trigger
    return JitEngine(small_catalog, JitConfig(norm_unit=5.0))


@pytest.fixture(scope="session")
def exam_100k():
    """PHYSICSMARKS and CHEMISTRYMARKS at the default 100,000 rows, seed 42."""
    from jitindex.dataset import DatasetSpec, generate_dataset

    cat = Catalog()
    generate_dataset(DatasetSpec(tables=("PHYSICSMARKS", "CHEMISTRYMARKS")), cat)
    return cat


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance verdict lines, which are otherwise captured."""
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if getattr(rep, "when", None) != "call":
                continue
            lines += [ln for ln in rep.capstdout.splitlines() if ln.startswith("ACCEPTANCE ")]
    if lines:
        terminalreporter.section("acceptance criteria")
        for ln in sorted(lines, key=lambda s: int(s.split()[3])):
            terminalreporter.write_line(ln)
