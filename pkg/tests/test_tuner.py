import csv
import math
import re

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phenosynth.cohort import HEURISTIC_PROGRAMS
from phenosynth.dsl import evaluate, extract_params, parse, render, size
from phenosynth.exceptions import ConfigurationError
from phenosynth.metrics import auprc
from phenosynth.tuner import TuneConfig, optimize, tune_program, write_trace

MISPARAMETERIZED = HEURISTIC_PROGRAMS["aTRH"].replace(">= 2", ">= 5")
NUMBER = re.compile(r"-?\d+(\.\d+)?(e[+-]?\d+)?")


def sphere(x):
    return -float(np.sum((np.asarray(x) - 3.0) ** 2))


def plateau(x):
    # staircase of width 0.25; 0 on the open box (3.75, 4.25) x (-2.25, -1.75)
    return -float(math.floor(4 * abs(x[0] - 4.0)) + math.floor(4 * abs(x[1] + 2.0)))


def test_config_validation():
    with pytest.raises(ConfigurationError):
        TuneConfig(budget=0)
    with pytest.raises(ConfigurationError):
        TuneConfig(objective="auroc")
    assert TuneConfig().initial_sigma(np.array([0.0, 4.0])).tolist() == [0.1, 2.0]


def test_analytic_optimum():
    res = optimize(sphere, np.zeros(3), TuneConfig(budget=1000, seed=0))
    assert np.all(np.abs(res.tuned_values - 3.0) < 0.05)
    assert res.evaluations_used == 1000
    assert len(res.trace) == 1000


def test_budget_one_returns_start():
    res = optimize(sphere, [1.0, 2.0], TuneConfig(budget=1))
    assert res.tuned_values.tolist() == [1.0, 2.0]
    assert res.tuned_score == res.original_score and res.evaluations_used == 1


def test_plateau_grid_oracle():
    g = np.round(np.arange(-10, 10.0001, 0.05), 10)
    scores = {(a, b): plateau((a, b)) for a in g for b in g}
    assert max(scores.values()) == 0.0
    inside = [k for k, v in scores.items() if v == 0.0]
    assert len(inside) == 81
    assert all(3.75 < a < 4.25 and -2.25 < b < -1.75 for a, b in inside)


def test_plateau_reached_on_all_seeds():
    for seed in range(10):
        res = optimize(plateau, [1.0, 1.0], TuneConfig(budget=1000, seed=seed))
        assert res.tuned_score == 0.0, seed


def test_objective_errors_are_minus_inf():
    def bad(x):
        # rising towards a cliff at 1; past it the objective fails
        if x[0] > 1:
            raise ZeroDivisionError
        return float("nan") if x[0] < -1 else float(x[0])

    res = optimize(bad, [0.0], TuneConfig(budget=200, seed=1))
    assert 0.9 < res.tuned_score <= 1.0
    assert any(r.score == -math.inf for r in res.trace)
    assert optimize(bad, [-2.0], TuneConfig(budget=1)).original_score == -math.inf


@settings(max_examples=40, deadline=None)
@given(x0=st.lists(st.floats(-20, 20), min_size=1, max_size=4), seed=st.integers(0, 1000),
       budget=st.integers(1, 150))
def test_property_elitist_and_deterministic(x0, seed, budget):
    cfg = TuneConfig(budget=budget, seed=seed)
    a = optimize(sphere, x0, cfg)
    b = optimize(sphere, x0, cfg)
    assert a.tuned_score >= a.original_score
    assert len(a.tuned_values) == len(x0)
    assert a.tuned_values.tolist() == b.tuned_values.tolist() and a.trace == b.trace
    assert a.evaluations_used == budget
    scores = [r.score for r in a.improvements]
    assert scores == sorted(scores) and scores[-1] == a.tuned_score


# -- programs ----------------------------------------------------------------

def test_misparameterized_fixture(cohort_default):
    y = cohort_default.label("aTRH", "heuristic")
    prog = parse(MISPARAMETERIZED, cohort_default.schema)
    true_prog = parse(HEURISTIC_PROGRAMS["aTRH"], cohort_default.schema)
    assert auprc(evaluate(true_prog, cohort_default).probabilities, y) == 1.0
    tuned, res = tune_program(prog, cohort_default, y, TuneConfig(budget=1000, seed=0))
    assert res.tuned_score - res.original_score >= 0.10
    assert size(tuned) == size(prog)
    assert auprc(evaluate(tuned, cohort_default).probabilities, y) == res.tuned_score


def test_optimal_program_unchanged(cohort_default):
    y = cohort_default.label("aTRH", "heuristic")
    prog = parse(HEURISTIC_PROGRAMS["aTRH"], cohort_default.schema)
    tuned, res = tune_program(prog, cohort_default, y, TuneConfig(budget=200))
    assert res.tuned_score == res.original_score == 1.0
    assert tuned == prog


def test_literal_free_program(cohort_default):
    prog = parse("phenotype p { return high_bp_n; }", cohort_default.schema)
    tuned, res = tune_program(prog, cohort_default, cohort_default.label("aTRH"))
    assert tuned is prog
    assert res.note == "no numeric literals to tune" and res.evaluations_used == 1


def test_runtime_failures_score_minus_inf(cohort_default):
    src = "phenotype p { return high_bp_n / (bp_n - bp_n); }"
    prog = parse(src, cohort_default.schema)
    assert not evaluate(prog, cohort_default).ok
    tuned, res = tune_program(prog, cohort_default, cohort_default.label("aTRH"), TuneConfig(budget=50))
    assert res.original_score == -math.inf
    assert size(tuned) == size(prog)


def test_structure_preserved_and_trace(tmp_path, cohort_default):
    src = ("phenotype p {\n  let s = 0.1;\n  if (high_bp_n >= 4) { s = s + 0.3; }\n"
           "  if (high_BP_during_htn_meds_3 >= 5) { s = s + 0.5; }\n  return clamp(s, 0, 1);\n}\n")
    prog = parse(src, cohort_default.schema)
    y = cohort_default.label("aTRH")
    tuned, res = tune_program(prog, cohort_default, y, TuneConfig(budget=300, seed=2))
    assert res.tuned_score >= res.original_score
    assert NUMBER.sub("#", render(tuned)) == NUMBER.sub("#", render(prog))
    assert len(extract_params(tuned)) == len(extract_params(prog))
    again = tune_program(prog, cohort_default, y, TuneConfig(budget=300, seed=2))[1]
    assert again.tuned_values.tolist() == res.tuned_values.tolist()

    write_trace(res, tmp_path / "trace.csv")
    rows = list(csv.reader(open(tmp_path / "trace.csv")))
    assert rows[0] == ["evaluation", "candidate", "score", "accepted"]
    assert len(rows) == 301
    assert rows[1][0] == "0" and rows[1][3] == "1"
