import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phenosynth.cohort import split_holdout
from phenosynth.evaluation import (
    EvalProtocol,
    bootstrap_ci,
    evaluate_with_ci,
    holm_adjust,
    mann_whitney,
    mwu_holm,
    percentile_interval,
    significance_tier,
    stratified_kfold,
    subgroup_report,
)
from phenosynth.exceptions import ConfigurationError
from phenosynth.metrics import auprc, auroc

from oracles import holm_loop, mww_exact_pairwise


def test_protocol_validation():
    EvalProtocol()
    with pytest.raises(ConfigurationError):
        EvalProtocol(folds=1)
    with pytest.raises(ConfigurationError):
        EvalProtocol(ci_level=1.0)


def test_stratified_kfold_tables(cohort_seed1):
    train, _ = split_holdout(cohort_seed1, 0.75, 0)
    y = train.label("aTRH")
    folds = stratified_kfold(train, 5, seed=3)
    ids = np.concatenate([va.ids for _, va in folds])
    assert sorted(ids) == sorted(train.ids)
    for tr, va in folds:
        expected = y.sum() * va.n_rows / train.n_rows
        assert abs(va.label("aTRH").sum() - expected) <= 1
        assert set(tr.ids).isdisjoint(va.ids)
    again = stratified_kfold(train, 5, seed=3)
    assert all(a[1] == b[1] for a, b in zip(folds, again))


def test_percentile_order_statistics():
    stats = np.arange(1, 1001, dtype=float)[::-1]
    assert percentile_interval(stats, 0.90) == (50.0, 950.0)


def test_bootstrap_perfect_predictor():
    y = np.array([1, 0] * 30)
    s = y * 0.8 + 0.1
    assert bootstrap_ci(s, y, auprc) == (1.0, 1.0, 1.0)
    assert bootstrap_ci(s, y, auroc)[:2] == (1.0, 1.0)


def test_bootstrap_constant_predictor_matches_direct_resampling():
    y = np.zeros(40, dtype=int)
    y[:10] = 1
    s = np.full(40, 0.3)
    lo, hi, point = bootstrap_ci(s, y, auprc, 0.9, 400, seed=5)
    assert point == 0.25
    assert lo <= 0.25 <= hi
    # direct oracle: constant scorer's AP on a resample is its prevalence
    rng = np.random.default_rng(5)
    direct = []
    while len(direct) < 400:
        idx = rng.integers(0, 40, 40)
        if y[idx].any():
            direct.append(y[idx].mean())
    direct = np.sort(direct)
    assert (lo, hi) == (direct[19], direct[379])


def test_bootstrap_point_equals_metric_and_seeded():
    rng = np.random.default_rng(1)
    s, y = rng.random(60), (rng.random(60) < 0.3).astype(int)
    a = bootstrap_ci(s, y, auprc, resamples=200, seed=9)
    assert a[2] == auprc(s, y)
    assert a == bootstrap_ci(s, y, auprc, resamples=200, seed=9)
    assert a[0] <= a[1]


def test_bootstrap_redraws_degenerate_resamples():
    y = np.zeros(30, dtype=int)
    y[0] = 1
    s = np.linspace(0, 1, 30)
    lo, hi, _ = bootstrap_ci(s, y, auprc, resamples=100, seed=0)
    assert 0 <= lo <= hi <= 1


def test_evaluate_with_ci():
    y = np.array([1, 0, 0, 1, 0, 0, 1, 0])
    r = evaluate_with_ci(y.astype(float), y, resamples=100)
    assert r.metrics.auprc == 1.0 and r.auprc_ci == (1.0, 1.0) and r.auroc_ci == (1.0, 1.0)
    d = r.to_dict()
    assert d["ci_level"] == 0.9


# -- subgroups ---------------------------------------------------------------

def test_subgroup_single_cell_equals_global():
    rng = np.random.default_rng(0)
    s, y = rng.random(50), (rng.random(50) < 0.4).astype(int)
    rep = subgroup_report(s, y, ["F"] * 50, ["White"] * 50)
    assert len(rep.cells) == 1
    c = rep.cells[0]
    assert (c.auprc, c.auroc, c.n) == (auprc(s, y), auroc(s, y), 50)


def test_subgroup_low_n_and_undefined():
    sex = ["F"] * 16 + ["M"] * 10
    race = ["Other"] * 16 + ["Black"] * 10
    y = np.array([1] + [0] * 15 + [0] * 10)
    s = np.linspace(0, 1, 26)
    rep = subgroup_report(s, y, sex, race)
    cells = {(c.race, c.sex): c for c in rep.cells}
    other_f = cells[("Other", "F")]
    assert other_f.n_positive == 1 and other_f.n == 16
    assert other_f.auprc is not None and other_f.low_n and not other_f.undefined
    black_m = cells[("Black", "M")]
    assert black_m.undefined and black_m.auprc is None
    assert rep.n == 26


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_property_subgroup_counts_sum(seed):
    rng = np.random.default_rng(seed)
    n = 80
    rep = subgroup_report(rng.random(n), rng.random(n) < 0.3,
                          rng.choice(["F", "M"], n), rng.choice(["Black", "White", "Other"], n))
    assert sum(c.n for c in rep.cells) == n
    assert all(c.n_positive <= c.n for c in rep.cells)


# -- significance ------------------------------------------------------------

def test_mww_examples():
    assert mann_whitney([1, 2, 3], [1, 2, 3]) == 1.0
    assert mann_whitney([1, 2, 3], [4, 5, 6]) == pytest.approx(0.1)
    assert mann_whitney([1, 2, 3], [4, 5, 6]) == pytest.approx(mww_exact_pairwise([1, 2, 3], [4, 5, 6]))


def test_mww_exact_matches_oracle_with_ties():
    rng = np.random.default_rng(3)
    for _ in range(30):
        x = rng.integers(0, 4, rng.integers(1, 6)).tolist()
        y = rng.integers(0, 4, rng.integers(1, 6)).tolist()
        assert mann_whitney(x, y) == pytest.approx(mww_exact_pairwise(x, y), abs=1e-12)


def test_mww_normal_approximation_against_scipy():
    from scipy.stats import mannwhitneyu

    rng = np.random.default_rng(11)
    for _ in range(20):
        x = rng.integers(0, 10, 15)
        y = rng.integers(2, 12, 12)
        ref = mannwhitneyu(x, y, alternative="two-sided", method="asymptotic", use_continuity=True).pvalue
        assert mann_whitney(x, y) == pytest.approx(ref, rel=1e-9)


def test_holm_examples():
    assert holm_adjust([0.01, 0.02, 0.04]) == pytest.approx([0.03, 0.04, 0.04])
    assert holm_adjust([0.04, 0.01, 0.02]) == pytest.approx([0.04, 0.03, 0.04])


@settings(max_examples=100, deadline=None)
@given(p=st.lists(st.floats(0, 1), min_size=1, max_size=12))
def test_property_holm(p):
    adj = holm_adjust(p)
    assert adj == pytest.approx(holm_loop(p))
    assert all(a >= b - 1e-15 for a, b in zip(adj, p))
    assert all(0 <= a <= 1 for a in adj)


def test_tiers():
    assert [significance_tier(p) for p in (5e-5, 5e-4, 5e-3, 0.03, 0.2, 1.0)] == \
        ["****", "***", "**", "*", "ns", "ns"]
    out = mwu_holm([([1, 2, 3], [1, 2, 3]), ([1, 2, 3], [4, 5, 6])])
    assert out[0] == (1.0, "ns")
    assert out[1][0] == pytest.approx(0.2)
