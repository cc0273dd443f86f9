"""Seeded synthetic cohort generator.

Labels are assigned first, with exact counts so that prevalences land on
target; features are then drawn conditionally on labels and a latent
severity so that every heuristic-positive row satisfies its rule and every
heuristic-negative row violates it.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Dict, Mapping

import numpy as np

from ..exceptions import ConfigurationError
from .heuristics import heuristic_labels
from .schema import FEATURE_CATALOG, PHENOTYPES, RACES, CohortTable, FeatureSchema

DEFAULT_PREVALENCE = {"HTN": 0.507, "HTN-HypoK": 0.143, "aTRH": 0.147}
DEFAULT_RACE = {"Black": 0.282, "White": 0.628, "Other": 0.090}


@dataclass
class GeneratorParams:
    n: int = 1199
    seed: int = 0
    target_prevalence: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_PREVALENCE))
    fn_rate: float = 0.10
    fp_rate: float = 0.02
    female_fraction: float = 0.615
    race_fractions: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_RACE))
    age_mean: float = 57.2
    age_sd: float = 18.5
    missing_rate: float = 0.05

    def validate(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise ConfigurationError(f"n must be a positive integer, got {self.n!r}")
        prev = dict(DEFAULT_PREVALENCE)
        for k, v in self.target_prevalence.items():
            if k not in PHENOTYPES:
                raise ConfigurationError(f"unknown phenotype {k!r} in target_prevalence")
            prev[k] = v
        fracs = dict(prev, fn_rate=self.fn_rate, fp_rate=self.fp_rate,
                     female_fraction=self.female_fraction, missing_rate=self.missing_rate)
        fracs.update({f"race {k}": v for k, v in self.race_fractions.items()})
        for name, v in fracs.items():
            if not 0.0 <= v <= 1.0:
                raise ConfigurationError(f"{name} must be in [0, 1], got {v}")
        if set(self.race_fractions) - set(RACES):
            raise ConfigurationError(f"race_fractions keys must be among {RACES}")
        if abs(sum(self.race_fractions.values()) - 1.0) > 1e-6:
            raise ConfigurationError("race_fractions must sum to 1")
        for sub in ("HTN-HypoK", "aTRH"):
            if prev[sub] > prev["HTN"]:
                raise ConfigurationError(f"{sub} prevalence cannot exceed HTN prevalence")
        if self.age_sd < 0:
            raise ConfigurationError("age_sd must be nonnegative")
        return prev

    def to_dict(self):
        return asdict(self)


def _exact_counts(n: int, fractions: Mapping[str, float]) -> Dict[str, int]:
    """Largest-remainder allocation of ``n`` items to categories."""
    raw = {k: v * n for k, v in fractions.items()}
    counts = {k: int(np.floor(v)) for k, v in raw.items()}
    short = n - sum(counts.values())
    for k in sorted(raw, key=lambda k: (counts[k] - raw[k], k))[:short]:
        counts[k] += 1
    return counts


def _pick(rng, pool: np.ndarray, k: int, weights: np.ndarray) -> np.ndarray:
    if k == 0 or len(pool) == 0:
        return np.array([], dtype=int)
    w = weights / weights.sum()
    return rng.choice(pool, size=k, replace=False, p=w)


def generate_cohort(params: GeneratorParams = None) -> CohortTable:
    """Generate a synthetic cohort; deterministic for a given seed."""
    params = params or GeneratorParams()
    prev = params.validate()
    n = int(params.n)
    rng = np.random.default_rng(params.seed)

    # demographics with exact marginals
    n_female = int(round(params.female_fraction * n))
    sex = rng.permutation(np.array(["F"] * n_female + ["M"] * (n - n_female), dtype=object))
    race_counts = _exact_counts(n, {r: params.race_fractions.get(r, 0.0) for r in RACES})
    race = rng.permutation(np.array(sum(([r] * race_counts[r] for r in RACES), []), dtype=object))
    black = race == "Black"

    severity = rng.gamma(shape=2.0, scale=1.0, size=n)

    # labels with exact counts, weighted toward severe subjects
    k = {ph: int(round(prev[ph] * n)) for ph in PHENOTYPES}
    everyone = np.arange(n)
    htn = np.zeros(n, bool)
    htn[_pick(rng, everyone, k["HTN"], severity + 0.05)] = True
    htn_idx = np.flatnonzero(htn)
    atrh = np.zeros(n, bool)
    atrh[_pick(rng, htn_idx, k["aTRH"], severity[htn_idx] ** 2 * np.where(black[htn_idx], 2.0, 1.0) + 1e-3)] = True
    hypok = np.zeros(n, bool)
    hypok[_pick(rng, htn_idx, k["HTN-HypoK"], 1.0 + 3.0 * atrh[htn_idx])] = True

    h, a, s = htn.astype(float), atrh.astype(float), severity
    pois = rng.poisson
    bern = lambda p: (rng.random(n) < p).astype(float)  # noqa: E731

    f: Dict[str, np.ndarray] = {}
    f["htn_dx_count"] = np.where(htn, 2 + pois(1 + 2 * s), bern(0.35))
    f["re_htn_sum"] = pois(3 * f["htn_dx_count"])
    f["re_htn_spec_sum"] = rng.binomial(f["re_htn_sum"].astype(int), 0.7).astype(float)

    # medication-era high BP counts; aTRH positives satisfy one of the two branches
    branch_a = rng.random(n) < 0.65
    meds3_pos = np.where(branch_a, 2 + pois(0.5 + 0.5 * s), bern(0.5))
    f["high_BP_during_htn_meds_3"] = np.where(atrh, meds3_pos, bern(np.where(htn, 0.25, 0.02)))
    enc4_pos = np.where(branch_a, pois(0.6), 2 + pois(1 + s))
    f["sum_enc_during_htn_meds_4_plus"] = np.where(atrh, enc4_pos, bern(np.where(htn, 0.15, 0.01)))
    f["high_BP_during_htn_meds_4_plus"] = rng.binomial(
        f["sum_enc_during_htn_meds_4_plus"].astype(int), 0.5
    ).astype(float)
    f["high_BP_during_htn_meds_1"] = pois(h * (0.8 + 0.3 * s) + 0.1)
    f["high_BP_during_htn_meds_2"] = pois(h * (0.6 + 0.3 * s) + 0.3 * a)
    on_meds = sum(f[f"high_BP_during_htn_meds_{x}"] for x in ("1", "2", "3", "4_plus"))

    bp_n = 1 + pois(6 + 3 * s + 4 * h)
    q = np.clip(0.08 + 0.2 * h + 0.04 * s + 0.1 * a, 0, 0.9)
    high_bp = np.maximum(rng.binomial(bp_n.astype(int), q), on_meds)
    f["bp_n"] = np.maximum(bp_n, high_bp)
    f["high_bp_n"] = high_bp.astype(float)
    f["bp_hyp_norm"] = f["high_bp_n"] / f["bp_n"]
    for x in ("1", "2", "3"):
        f[f"sum_enc_during_htn_meds_{x}"] = f[f"high_BP_during_htn_meds_{x}"] + pois(1 + 2 * h)

    # potassium evidence; HTN-positive rows without HypoK stay below every threshold
    which = rng.integers(0, 3, n)
    k_names = ("low_K_N", "Med_Potassium_N", "Dx_HypoK_N")
    neg_htn_p = (0.15, 0.10, 0.08)
    neg_rate = (0.3, 0.15, 0.1)
    for j, name in enumerate(k_names):
        pos_val = np.where(which == j, 2 + pois(1.0, n), (rng.random(n) < 0.3).astype(float))
        neg_val = np.where(htn, bern(neg_htn_p[j]), pois(neg_rate[j], n))
        f[name] = np.where(hypok, pos_val, neg_val)
    f["test_K_N"] = f["low_K_N"] + pois(3 + s)
    f["N_med_k_chlo_enc"] = f["Med_Potassium_N"] + pois(0.5, n)

    mean_sys = rng.normal(120 + 10 * h + 3 * s + 5 * a, 9)
    mean_dia = rng.normal(75 + 4 * h + 1.5 * s + 2 * a, 7)
    f["mean_systolic"] = mean_sys
    f["median_systolic"] = mean_sys + rng.normal(0, 2, n)
    f["mean_diastolic"] = mean_dia
    f["median_diastolic"] = mean_dia + rng.normal(0, 1.5, n)
    f["max_systolic"] = mean_sys + 10 + rng.gamma(2.0, 5.0, n)
    f["max_diastolic"] = mean_dia + 6 + rng.gamma(2.0, 3.0, n)
    f["sd_systolic"] = np.abs(rng.normal(12, 3, n))
    f["sd_diastolic"] = np.abs(rng.normal(8, 2, n))
    f["median_lab_potassium"] = rng.normal(4.2 - 0.35 * hypok, 0.3)
    f["median_bmi"] = np.clip(rng.normal(29 + h, 5), 15, 60)
    f["median_weight"] = np.clip(rng.normal(82 + 3 * h, 15), 40, 200)

    f["Med_HTN_N"] = pois(h * (4 + 3 * s) + 0.5)
    f["MED_N"] = f["Med_HTN_N"] + pois(15 + 3 * s)
    f["Dx_N"] = f["htn_dx_count"] + pois(20 + 5 * s)
    f["enc_N"] = f["bp_n"] + pois(3.0, n)
    f["re_word_count_sum"] = pois(5000 + 800 * s)
    f["dx_heart_failure"] = bern(0.06 + 0.06 * a)
    f["dx_ckd_moderate_severe"] = bern(0.08 + 0.05 * h)
    f["dx_heart_transplant"] = bern(0.01)
    f["practice_type"] = bern(0.55)
    f["ZIP_CAT"] = rng.choice(5, size=n, p=[0.3, 0.25, 0.2, 0.15, 0.1]).astype(float)

    schema = FeatureSchema(FEATURE_CATALOG)
    values = np.column_stack([np.asarray(f[name], dtype=float) for name in schema.names])

    labels = {}
    intended = {"HTN": htn, "HTN-HypoK": hypok, "aTRH": atrh}
    for ph in PHENOTYPES:
        lab = heuristic_labels(ph, f)
        if not np.array_equal(lab, intended[ph]):  # pragma: no cover - recipe invariant
            raise AssertionError(f"generator produced features inconsistent with {ph} labels")
        flip = np.where(lab, rng.random(n) < params.fn_rate, rng.random(n) < params.fp_rate)
        labels[(ph, "heuristic")] = lab
        labels[(ph, "dx")] = lab ^ flip

    # missing completely at random, continuous features only
    for j, spec in enumerate(schema.entries):
        if spec.kind == "continuous":
            values[rng.random(n) < params.missing_rate, j] = np.nan

    ages = np.sort(np.clip(rng.normal(params.age_mean, params.age_sd, n), 18, 110))
    age = np.empty(n)
    age[np.argsort(s + rng.normal(0, 1.5, n))] = ages
    age = np.round(age, 1)

    ids = [f"P{i:05d}" for i in range(n)]
    return CohortTable(
        schema, ids, values, age, sex, race, labels,
        {"generator": {"seed": params.seed, "params": params.to_dict()}},
    )
