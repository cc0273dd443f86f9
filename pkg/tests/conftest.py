import numpy as np
import pytest

from phenosynth.cohort import CohortTable, FeatureSchema, FeatureSpec, GeneratorParams, generate_cohort


def make_table(columns, labels=None, kinds=None, sex=None, race=None, age=None):
    """Small hand-built cohort. ``columns`` maps feature name -> values."""
    names = list(columns)
    kinds = kinds or {}
    schema = FeatureSchema(tuple(FeatureSpec(n, f"{n} description", kinds.get(n, "count")) for n in names))
    values = np.column_stack([np.asarray(columns[n], dtype=float) for n in names])
    n = values.shape[0]
    return CohortTable(
        schema,
        [f"p{i}" for i in range(n)],
        values,
        age if age is not None else np.full(n, 50.0),
        sex if sex is not None else ["F"] * n,
        race if race is not None else ["White"] * n,
        labels or {},
    )


@pytest.fixture(scope="session")
def cohort_seed1():
    return generate_cohort(GeneratorParams(n=1199, seed=1))


@pytest.fixture(scope="session")
def cohort_default():
    return generate_cohort(GeneratorParams())


def _ranked_column(pos_ranks, n=20):
    """Column whose descending order puts the positive rows (listed first) at the
    given 1-based ranks and negatives at the remaining ranks."""
    rest = [r for r in range(1, n + 1) if r not in pos_ranks]
    ranks = list(pos_ranks) + rest
    return np.array([n + 1 - r for r in ranks], dtype=float)


# Average precision with 4 positives at ranks (1,2,15,20) is 0.6, at
# (1,2,3,20) 0.8 and at (1,2,5,20) 0.7.
SELECTION_RANKS = {"f_a": (1, 2, 15, 20), "f_b": (1, 2, 3, 20), "f_c": (1, 2, 5, 20)}


def selection_table():
    y = np.zeros(20, dtype=bool)
    y[:4] = True
    cols = {name: _ranked_column(r) for name, r in SELECTION_RANKS.items()}
    return make_table(cols, labels={("aTRH", "heuristic"): y})


def column_program(name):
    return f"```\nphenotype predict_hypertension {{\n  return {name} / 20;\n}}\n```"


SELECTION_SCRIPT = [
    "phenotype predict_hypertension { return f_a / ; }",
    column_program("f_a"),
    column_program("f_b"),
    column_program("f_c"),
]


# criterion number -> (passed, detail), filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
