import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phenosynth.cohort import (
    EXPERT_FEATURES,
    FEATURE_CATALOG,
    PHENOTYPES,
    CohortPreprocessor,
    FeatureSchema,
    GeneratorParams,
    apply_heuristic,
    generate_cohort,
    heuristic_labels,
    holdout_indices,
    kfold_indices,
    load_cohort,
    load_dictionary,
    preprocess,
    save_cohort,
    save_dictionary,
    split_holdout,
)
from phenosynth.exceptions import (
    CohortParseError,
    ConfigurationError,
    DegenerateTableError,
    SchemaError,
    StratificationError,
)

from conftest import make_table


# -- schema ------------------------------------------------------------------

def test_expert_subset_names():
    expected = {
        "mean_systolic", "median_systolic", "mean_diastolic", "median_diastolic", "bp_n", "high_bp_n",
        "high_BP_during_htn_meds_1", "high_BP_during_htn_meds_2", "high_BP_during_htn_meds_3",
        "high_BP_during_htn_meds_4_plus", "sum_enc_during_htn_meds_4_plus", "low_K_N", "test_K_N",
        "Med_Potassium_N", "Dx_HypoK_N", "re_htn_sum",
    }
    assert EXPERT_FEATURES == expected
    schema = FeatureSchema.default()
    assert EXPERT_FEATURES <= set(schema.names)
    assert len(set(schema.names)) == len(FEATURE_CATALOG)


def test_duplicate_feature_names_rejected():
    with pytest.raises(ConfigurationError):
        FeatureSchema(FEATURE_CATALOG[:2] + FEATURE_CATALOG[:1])


def test_table_is_read_only(cohort_seed1):
    with pytest.raises(ValueError):
        cohort_seed1.values[0, 0] = 1.0
    with pytest.raises(Exception):
        cohort_seed1.schema = None


def test_count_feature_must_be_integer():
    with pytest.raises(SchemaError):
        make_table({"bp_n": [1.0, 2.5]})
    with pytest.raises(SchemaError):
        make_table({"bp_n": [1.0, -1.0]})


def test_age_bounds():
    with pytest.raises(SchemaError):
        make_table({"bp_n": [1.0]}, age=np.array([17.0]))


# -- generator ---------------------------------------------------------------

def test_generator_seed1_htn_prevalence(cohort_seed1):
    prev = cohort_seed1.label("HTN", "heuristic").mean()
    assert 0.487 <= prev <= 0.527


def test_generator_zero_prevalence():
    t = generate_cohort(GeneratorParams(n=10, seed=7, target_prevalence={"aTRH": 0.0}))
    assert not t.label("aTRH", "heuristic").any()


def test_generator_n2000_seed3_atrh():
    t = generate_cohort(GeneratorParams(n=2000, seed=3))
    # oracle: re-apply the rule row by row
    recount = np.mean([apply_heuristic("aTRH", r) for r in t.rows])
    assert recount == pytest.approx(t.label("aTRH", "heuristic").mean())
    assert abs(recount - 0.147) <= 0.02


def test_generator_deterministic():
    p = GeneratorParams(n=300, seed=11)
    assert generate_cohort(p) == generate_cohort(p)
    assert generate_cohort(p) != generate_cohort(GeneratorParams(n=300, seed=12))


@pytest.mark.parametrize("bad", [
    dict(n=0), dict(fn_rate=1.5), dict(fp_rate=-0.1),
    dict(race_fractions={"Black": 0.5, "White": 0.2, "Other": 0.2}),
    dict(target_prevalence={"HTN": 0.1, "aTRH": 0.2}),
    dict(target_prevalence={"Gout": 0.1}),
])
def test_generator_invalid_params(bad):
    with pytest.raises(ConfigurationError):
        generate_cohort(GeneratorParams(**bad))


def test_dx_noise_rates_within_binomial_bound(cohort_seed1):
    t = generate_cohort(GeneratorParams(n=4000, seed=5))
    for ph in PHENOTYPES:
        h, d = t.label(ph, "heuristic"), t.label(ph, "dx")
        npos, nneg = h.sum(), (~h).sum()
        fn = (h & ~d).sum() / npos
        fp = (~h & d).sum() / nneg
        assert abs(fn - 0.10) <= 3 * math.sqrt(0.10 * 0.90 / npos)
        assert abs(fp - 0.02) <= 3 * math.sqrt(0.02 * 0.98 / nneg)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 400))
def test_generator_self_consistency(seed, n):
    t = generate_cohort(GeneratorParams(n=n, seed=seed))
    cols = t.columns()
    for ph in PHENOTYPES:
        assert np.array_equal(heuristic_labels(ph, cols), t.label(ph, "heuristic"))
    # containment
    assert not (t.label("HTN-HypoK", "heuristic") & ~t.label("HTN", "heuristic")).any()
    # counts are nonnegative integers, ages in range
    for spec in t.schema.entries:
        col = t.column(spec.name)
        if spec.kind == "count":
            assert not np.isnan(col).any()
            assert (col >= 0).all() and (col == np.floor(col)).all()
    assert ((t.age >= 18) & (t.age <= 110)).all()


# -- heuristics --------------------------------------------------------------

def _row(**kw):
    base = {n: 0.0 for n in ("htn_dx_count", "low_K_N", "Med_Potassium_N", "Dx_HypoK_N",
                             "high_BP_during_htn_meds_3", "sum_enc_during_htn_meds_4_plus")}
    base.update(kw)
    return base


def test_heuristic_examples():
    assert apply_heuristic("aTRH", _row(high_BP_during_htn_meds_3=2))
    for ph in PHENOTYPES:
        assert not apply_heuristic(ph, _row())
    assert apply_heuristic("HTN-HypoK", _row(htn_dx_count=3, low_K_N=1, Med_Potassium_N=2))
    assert not apply_heuristic("HTN-HypoK", _row(htn_dx_count=1, low_K_N=5))
    assert apply_heuristic("HTN", _row(htn_dx_count=2))


def test_heuristic_missing_feature_named():
    with pytest.raises(SchemaError) as err:
        apply_heuristic("aTRH", {"high_BP_during_htn_meds_3": 3})
    assert "sum_enc_during_htn_meds_4_plus" in str(err.value)


def test_heuristic_unknown_phenotype():
    with pytest.raises(ConfigurationError):
        apply_heuristic("Gout", _row())


# -- preprocessing -----------------------------------------------------------

def test_preprocess_drops_constant_feature():
    t = make_table({"a": [0, 0, 0, 0], "b": [1, 2, 3, 4]})
    out = preprocess(t)
    assert out.schema.names == ("b",)
    assert out.n_rows == 4


def test_preprocess_median_imputation():
    nan = float("nan")
    t = make_table({"x": [1, nan, 2, nan, 3, nan, 4]}, kinds={"x": "continuous"})
    out = preprocess(t)
    assert out.column("x").tolist() == [1, 2.5, 2, 2.5, 3, 2.5, 4]


def test_preprocess_sparse_feature_removed():
    sparse = np.zeros(100)
    sparse[:4] = 50.0  # 4% nonzero, variance well above threshold
    t = make_table({"sparse": sparse, "dense": np.arange(100)})
    pre = CohortPreprocessor().fit(t)
    assert pre.variances_["sparse"] > 0.05
    assert pre.dropped_ == ["sparse"]


def test_preprocess_all_removed():
    with pytest.raises(DegenerateTableError):
        preprocess(make_table({"a": [1, 1, 1]}))


def test_preprocess_idempotent(cohort_seed1):
    once = preprocess(cohort_seed1)
    assert preprocess(once) == once
    assert once.n_rows == cohort_seed1.n_rows
    assert not np.isnan(once.values).any()


def test_preprocessor_uses_fit_medians():
    nan = float("nan")
    train = make_table({"x": [1, 2, 3]}, kinds={"x": "continuous"})
    test = make_table({"x": [nan, 10]}, kinds={"x": "continuous"})
    pre = CohortPreprocessor(variance_threshold=0.0).fit(train)
    assert pre.transform(test).column("x").tolist() == [2.0, 10.0]


# -- splits ------------------------------------------------------------------

def test_split_sizes(cohort_seed1):
    train, test = split_holdout(cohort_seed1, 0.75, seed=0)
    assert (train.n_rows, test.n_rows) == (899, 300)
    assert set(train.ids).isdisjoint(test.ids)
    assert set(train.ids) | set(test.ids) == set(cohort_seed1.ids)
    gap = abs(train.label("aTRH").mean() - test.label("aTRH").mean())
    assert gap <= 1 / 300


def test_split_single_stratum():
    tr, te = holdout_indices(np.zeros(1199, dtype=bool), 0.75, seed=2)
    assert (len(tr), len(te)) == (899, 300)


def test_split_too_few_positives():
    y = np.zeros(50, dtype=bool)
    y[0] = True
    with pytest.raises(StratificationError):
        holdout_indices(y, 0.75, 0)


def test_split_bad_fraction():
    with pytest.raises(ConfigurationError):
        holdout_indices(np.ones(10, dtype=bool), 1.0)


@settings(max_examples=50, deadline=None)
@given(n=st.integers(10, 400), p=st.floats(0.05, 0.95), seed=st.integers(0, 999),
       frac=st.floats(0.2, 0.9))
def test_split_stratified_property(n, p, seed, frac):
    rng = np.random.default_rng(seed)
    y = rng.random(n) < p
    if min(y.sum(), (~y).sum()) < 2:
        return
    try:
        tr, te = holdout_indices(y, frac, seed)
    except StratificationError:
        return
    assert len(np.intersect1d(tr, te)) == 0 and len(tr) + len(te) == n
    assert abs(y[tr].sum() - frac * y.sum()) <= 1
    again = holdout_indices(y, frac, seed)
    assert np.array_equal(again[0], tr)


def test_kfold_partition():
    y = np.zeros(899, dtype=bool)
    y[:99] = True
    folds = kfold_indices(y, 5, seed=4)
    seen = np.concatenate([v for _, v in folds])
    assert sorted(seen.tolist()) == list(range(899))
    for tr, va in folds:
        assert y[va].sum() in (19, 20)
        assert len(np.intersect1d(tr, va)) == 0


def test_kfold_leave_one_out():
    y = np.array([True, False, True, False, False])
    folds = kfold_indices(y, 5, 0)
    assert all(len(va) == 1 for _, va in folds)


# -- io ----------------------------------------------------------------------

def test_cohort_round_trip(tmp_path, cohort_seed1):
    save_cohort(cohort_seed1, tmp_path / "c.csv")
    back = load_cohort(tmp_path / "c.csv")
    assert back == cohort_seed1
    # bit-exact, NaNs preserved
    assert np.array_equal(back.values.view(np.int64), cohort_seed1.values.view(np.int64))
    assert np.isnan(back.values).any()


def test_dictionary_round_trip(tmp_path, cohort_seed1):
    save_dictionary(cohort_seed1.schema, tmp_path / "d.json")
    d = load_dictionary(tmp_path / "d.json")
    assert d == cohort_seed1.schema.dictionary()
    back = load_cohort(save_cohort(cohort_seed1, tmp_path / "c.csv"), d)
    assert back == cohort_seed1


def test_load_header_only(tmp_path, cohort_seed1):
    save_cohort(cohort_seed1.take([0]), tmp_path / "c.csv")
    header = (tmp_path / "c.csv").read_text().splitlines()[0]
    (tmp_path / "h.csv").write_text(header + "\n")
    with pytest.raises(DegenerateTableError):
        load_cohort(tmp_path / "h.csv")


def test_load_unknown_column(tmp_path, cohort_seed1):
    save_cohort(cohort_seed1.take([0, 1]), tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    lines = [lines[0] + ",mystery_col"] + [l + ",1" for l in lines[1:]]
    (tmp_path / "x.csv").write_text("\n".join(lines) + "\n")
    with pytest.raises(CohortParseError) as err:
        load_cohort(tmp_path / "x.csv")
    assert "mystery_col" in str(err.value)
    assert err.value.line == 1


def test_load_malformed_row_line_number(tmp_path, cohort_seed1):
    save_cohort(cohort_seed1.take([0, 1, 2]), tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    lines[2] = lines[2] + ",extra"
    (tmp_path / "m.csv").write_text("\n".join(lines) + "\n")
    with pytest.raises(CohortParseError) as err:
        load_cohort(tmp_path / "m.csv")
    assert err.value.line == 3
