"""Synthetic EHR-style cohorts: schema, generation, labels, preprocessing, IO."""
from .generate import DEFAULT_PREVALENCE, GeneratorParams, generate_cohort
from .heuristics import HEURISTIC_PROGRAMS, apply_heuristic, heuristic_labels
from .io import load_cohort, load_dictionary, save_cohort, save_dictionary
from .preprocess import CohortPreprocessor, PreprocessConfig, preprocess
from .schema import (
    EXPERT_FEATURES,
    FEATURE_CATALOG,
    LABEL_SOURCES,
    PHENOTYPES,
    CohortTable,
    FeatureSchema,
    FeatureSpec,
    PatientRecord,
)
from .split import holdout_indices, kfold_indices, split_holdout

__all__ = [
    "DEFAULT_PREVALENCE",
    "EXPERT_FEATURES",
    "FEATURE_CATALOG",
    "HEURISTIC_PROGRAMS",
    "LABEL_SOURCES",
    "PHENOTYPES",
    "CohortPreprocessor",
    "CohortTable",
    "FeatureSchema",
    "FeatureSpec",
    "GeneratorParams",
    "PatientRecord",
    "PreprocessConfig",
    "apply_heuristic",
    "generate_cohort",
    "heuristic_labels",
    "holdout_indices",
    "kfold_indices",
    "load_cohort",
    "load_dictionary",
    "preprocess",
    "save_cohort",
    "save_dictionary",
    "split_holdout",
]
