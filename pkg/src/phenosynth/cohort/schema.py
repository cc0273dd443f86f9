"""Feature schema, patient records and the immutable cohort table."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, FrozenSet, Iterable, List, Mapping, Tuple

import numpy as np

from ..exceptions import ConfigurationError, SchemaError

KINDS = ("count", "continuous", "binary", "categorical-coded")
PHENOTYPES = ("HTN", "HTN-HypoK", "aTRH")
LABEL_SOURCES = ("heuristic", "dx")
SEXES = ("F", "M")
RACES = ("Black", "White", "Other")


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    description: str
    kind: str


# (name, description, kind). Order here is the schema order used in files
# and prompts. The first block is the expert set.
FEATURE_CATALOG: Tuple[FeatureSpec, ...] = tuple(
    FeatureSpec(*row)
    for row in [
        ("mean_systolic", "Mean of systolic blood pressure (SBP) measured", "continuous"),
        ("median_systolic", "Median of systolic blood pressure (SBP) measured", "continuous"),
        ("mean_diastolic", "Mean of diastolic blood pressure (DBP) measured", "continuous"),
        ("median_diastolic", "Median of diastolic blood pressure (DBP) measured", "continuous"),
        ("bp_n", "Total number of blood pressure (BP) measurements", "count"),
        ("high_bp_n", "Number of high blood pressure measurements (SBP >= 140 or DBP >= 90)", "count"),
        ("high_BP_during_htn_meds_1", "Number of high BP measurements (SBP >=140 or DBP >=90) while prescribed 1 hypertension medications", "count"),
        ("high_BP_during_htn_meds_2", "Number of high BP measurements (SBP >=140 or DBP >=90) while prescribed 2 hypertension medications", "count"),
        ("high_BP_during_htn_meds_3", "Number of high BP measurements (SBP >=140 or DBP >=90) while prescribed 3 hypertension medications", "count"),
        ("high_BP_during_htn_meds_4_plus", "Number of high BP measurements (SBP >=140 or DBP >=90) while prescribed four or more hypertension medications", "count"),
        ("sum_enc_during_htn_meds_4_plus", "Total encounters while prescribed 4 or more hypertension medications", "count"),
        ("low_K_N", "Total number of low potassium test results", "count"),
        ("test_K_N", "Total number of potassium test results", "count"),
        ("Med_Potassium_N", "Total number of potassium supplement prescriptions", "count"),
        ("Dx_HypoK_N", "Total number of hypokalemia diagnoses", "count"),
        ("re_htn_sum", "Sum of regex counts for hypertension in clinical notes", "count"),
        # extended features
        ("htn_dx_count", "Total number of hypertension diagnosis codes (ICD-9/ICD-10)", "count"),
        ("max_systolic", "Maximum of systolic blood pressure (SBP) measured", "continuous"),
        ("max_diastolic", "Maximum of diastolic blood pressure (DBP) measured", "continuous"),
        ("sd_systolic", "Standard deviation of systolic blood pressure (SBP) measured", "continuous"),
        ("sd_diastolic", "Standard deviation of diastolic blood pressure (DBP) measured", "continuous"),
        ("bp_hyp_norm", "Fraction of blood pressure measurements that were high (high_bp_n/bp_n)", "continuous"),
        ("sum_enc_during_htn_meds_1", "Total encounters while prescribed 1 hypertension medication", "count"),
        ("sum_enc_during_htn_meds_2", "Total encounters while prescribed 2 hypertension medications", "count"),
        ("sum_enc_during_htn_meds_3", "Total encounters while prescribed 3 hypertension medications", "count"),
        ("Med_HTN_N", "Number of anti-hypertensive medication prescriptions", "count"),
        ("MED_N", "Number of medication prescriptions total", "count"),
        ("Dx_N", "Number of total ICD-9 and ICD-10 codes", "count"),
        ("enc_N", "Number of outpatient encounters", "count"),
        ("N_med_k_chlo_enc", "Number of encounters on potassium chloride/potassium gluconate", "count"),
        ("median_lab_potassium", "Median of serum potassium lab results (mmol/L)", "continuous"),
        ("median_bmi", "Median of BMI", "continuous"),
        ("median_weight", "Median of weight (kg)", "continuous"),
        ("re_htn_spec_sum", "Sum of regex counts for hypertension in clinical notes (specific, excluding preliminary negations)", "count"),
        ("re_word_count_sum", "Sum of word counts in clinical notes", "count"),
        ("dx_heart_failure", "1 = heart failure diagnosis code present, 0 = absent", "binary"),
        ("dx_ckd_moderate_severe", "1 = moderate to severe chronic kidney disease diagnosis code present, 0 = absent", "binary"),
        ("dx_heart_transplant", "1 = heart transplant diagnosis code present, 0 = absent", "binary"),
        ("practice_type", "1 = internal medicine practice, 0 = family medicine practice", "binary"),
        ("ZIP_CAT", "Distance from patient's home to 19104, binned (0-4)", "categorical-coded"),
    ]
)

EXPERT_FEATURES: FrozenSet[str] = frozenset(spec.name for spec in FEATURE_CATALOG[:16])


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered feature definitions plus the expert subset."""

    entries: Tuple[FeatureSpec, ...]
    expert_subset: FrozenSet[str] = EXPERT_FEATURES

    def __post_init__(self):
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ConfigurationError(f"duplicate feature names: {dupes}")
        for e in self.entries:
            if e.kind not in KINDS:
                raise ConfigurationError(f"feature {e.name!r} has unknown kind {e.kind!r}")
        # expert names absent from this schema (e.g. dropped in preprocessing) are pruned
        object.__setattr__(self, "expert_subset", frozenset(self.expert_subset) & set(names))

    @classmethod
    def default(cls) -> "FeatureSchema":
        return cls(FEATURE_CATALOG)

    @classmethod
    def from_dictionary(cls, dictionary: Mapping[str, str]) -> "FeatureSchema":
        """Build a schema from a data dictionary (name -> description)."""
        known = {e.name: e for e in FEATURE_CATALOG}
        entries = []
        for name, desc in dictionary.items():
            kind = known[name].kind if name in known else "continuous"
            entries.append(FeatureSpec(name, desc, kind))
        return cls(tuple(entries))

    @cached_property
    def names(self) -> Tuple[str, ...]:
        return tuple(e.name for e in self.entries)

    def __contains__(self, name) -> bool:
        return name in self.index

    def __len__(self):
        return len(self.entries)

    @cached_property
    def index(self) -> Dict[str, int]:
        return {e.name: i for i, e in enumerate(self.entries)}

    def kind(self, name: str) -> str:
        try:
            return self.entries[self.index[name]].kind
        except KeyError:
            raise SchemaError(f"unknown feature {name!r}", name) from None

    def subset(self, names: Iterable[str]) -> "FeatureSchema":
        keep = set(names)
        return FeatureSchema(
            tuple(e for e in self.entries if e.name in keep), self.expert_subset
        )

    def dictionary(self, expert_only: bool = False) -> Dict[str, str]:
        """Data dictionary (name -> description) in schema order."""
        return {
            e.name: e.description
            for e in self.entries
            if not expert_only or e.name in self.expert_subset
        }


@dataclass(frozen=True)
class PatientRecord:
    id: str
    features: Mapping[str, float]
    age: float
    sex: str
    race: str
    labels: Mapping[str, Mapping[str, bool]]


def _frozen(arr, dtype=None):
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class CohortTable:
    """Column-oriented, read-only cohort.

    ``values`` is an (n_rows, n_features) float64 matrix in schema order,
    with NaN marking missing entries. ``labels`` maps
    ``(phenotype, source)`` to a boolean vector.
    """

    schema: FeatureSchema
    ids: np.ndarray
    values: np.ndarray
    age: np.ndarray
    sex: np.ndarray
    race: np.ndarray
    labels: Mapping[Tuple[str, str], np.ndarray]
    provenance: Mapping = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.ids)
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape != (n, len(self.schema)):
            raise SchemaError(
                f"values shape {values.shape} does not match {n} rows x {len(self.schema)} features"
            )
        object.__setattr__(self, "ids", _frozen([str(i) for i in self.ids], dtype=object))
        object.__setattr__(self, "values", _frozen(values, dtype=float))
        object.__setattr__(self, "age", _frozen(self.age, dtype=float))
        object.__setattr__(self, "sex", _frozen(self.sex, dtype=object))
        object.__setattr__(self, "race", _frozen(self.race, dtype=object))
        labels = {}
        for key, vec in dict(self.labels).items():
            vec = _frozen(vec, dtype=bool)
            if vec.shape != (n,):
                raise SchemaError(f"label {key} has {vec.shape[0]} entries for {n} rows")
            labels[tuple(key)] = vec
        object.__setattr__(self, "labels", labels)
        for name, arr in (("age", self.age), ("sex", self.sex), ("race", self.race)):
            if arr.shape != (n,):
                raise SchemaError(f"{name} has {arr.shape[0]} entries for {n} rows")
        object.__setattr__(self, "_index", self.schema.index)
        self._validate()

    def _validate(self):
        def bad(row, msg):
            err = SchemaError(f"row {row} (id {self.ids[row]!r}): {msg}")
            err.row = row
            raise err

        for j, spec in enumerate(self.schema.entries):
            if spec.kind != "count":
                continue
            col = self.values[:, j]
            wrong = ~np.isnan(col) & ((col < 0) | (col != np.floor(col)))
            if wrong.any():
                i = int(np.flatnonzero(wrong)[0])
                bad(i, f"count feature {spec.name!r} must be a nonnegative integer, got {col[i]!r}")
        out = ~((self.age >= 18) & (self.age <= 110))
        if out.any():
            i = int(np.flatnonzero(out)[0])
            bad(i, f"age {self.age[i]!r} outside [18, 110]")
        for name, arr, allowed in (("sex", self.sex, SEXES), ("race", self.race, RACES)):
            for i, v in enumerate(arr):
                if v not in allowed:
                    bad(i, f"{name} {v!r} not one of {list(allowed)}")

    # ------------------------------------------------------------------
    @property
    def n_rows(self) -> int:
        return len(self.ids)

    def __len__(self):
        return self.n_rows

    def column(self, name: str) -> np.ndarray:
        try:
            return self.values[:, self._index[name]]
        except KeyError:
            raise SchemaError(f"table has no feature {name!r}", name) from None

    def columns(self) -> Dict[str, np.ndarray]:
        return {name: self.values[:, i] for name, i in self._index.items()}

    def label(self, phenotype: str, source: str = "heuristic") -> np.ndarray:
        try:
            return self.labels[(phenotype, source)]
        except KeyError:
            raise SchemaError(f"table has no {source} label for {phenotype!r}") from None

    def record(self, i: int) -> PatientRecord:
        feats = {name: float(self.values[i, j]) for name, j in self._index.items()}
        labels: Dict[str, Dict[str, bool]] = {}
        for (ph, src), vec in self.labels.items():
            labels.setdefault(ph, {})[src] = bool(vec[i])
        return PatientRecord(
            str(self.ids[i]), feats, float(self.age[i]), str(self.sex[i]), str(self.race[i]), labels
        )

    @property
    def rows(self) -> List[PatientRecord]:
        return [self.record(i) for i in range(self.n_rows)]

    def take(self, indices) -> "CohortTable":
        idx = np.asarray(indices, dtype=int)
        return CohortTable(
            self.schema,
            self.ids[idx],
            self.values[idx],
            self.age[idx],
            self.sex[idx],
            self.race[idx],
            {k: v[idx] for k, v in self.labels.items()},
            dict(self.provenance),
        )

    def with_features(self, schema: FeatureSchema, values: np.ndarray) -> "CohortTable":
        return CohortTable(
            schema, self.ids, values, self.age, self.sex, self.race, self.labels, dict(self.provenance)
        )

    def with_label(self, phenotype: str, source: str, values) -> "CohortTable":
        labels = dict(self.labels)
        labels[(phenotype, source)] = np.asarray(values, dtype=bool)
        return CohortTable(
            self.schema, self.ids, self.values, self.age, self.sex, self.race, labels, dict(self.provenance)
        )

    def __eq__(self, other):
        if not isinstance(other, CohortTable):
            return NotImplemented
        return (
            self.schema.names == other.schema.names
            and np.array_equal(self.ids, other.ids)
            and np.array_equal(self.values, other.values, equal_nan=True)
            and np.array_equal(self.age, other.age)
            and np.array_equal(self.sex, other.sex)
            and np.array_equal(self.race, other.race)
            and self.labels.keys() == other.labels.keys()
            and all(np.array_equal(v, other.labels[k]) for k, v in self.labels.items())
        )

    __hash__ = None

    def __repr__(self):
        return f"CohortTable(n_rows={self.n_rows}, n_features={len(self.schema)})"
