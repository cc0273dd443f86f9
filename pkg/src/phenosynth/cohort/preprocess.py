"""Median imputation and removal of low-variance or sparse features."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ..exceptions import ConfigurationError, DegenerateTableError
from .schema import CohortTable, FeatureSchema


@dataclass(frozen=True)
class PreprocessConfig:
    variance_threshold: float = 0.05
    nonzero_fraction_threshold: float = 0.05
    imputation: str = "median"

    def __post_init__(self):
        if self.imputation != "median":
            raise ConfigurationError(f"unsupported imputation {self.imputation!r}")
        if self.variance_threshold < 0 or not 0 <= self.nonzero_fraction_threshold <= 1:
            raise ConfigurationError("thresholds must be nonnegative fractions")


class CohortPreprocessor(TransformerMixin, BaseEstimator):
    """Impute missing values with the column median, then drop features
    whose variance or nonzero fraction falls below the thresholds.

    Filters are computed on the imputed values, which makes the transform
    idempotent.
    """

    def __init__(self, variance_threshold=0.05, nonzero_fraction_threshold=0.05):
        self.variance_threshold = variance_threshold
        self.nonzero_fraction_threshold = nonzero_fraction_threshold

    def fit(self, X: CohortTable, y=None):
        if X.n_rows == 0:
            raise DegenerateTableError("cannot preprocess an empty table")
        values = X.values
        observed = ~np.isnan(values)
        medians = np.full(values.shape[1], np.nan)
        for j in range(values.shape[1]):
            if observed[:, j].any():
                medians[j] = np.median(values[observed[:, j], j])
        imputed = np.where(observed, values, medians)
        with np.errstate(invalid="ignore"):
            variance = imputed.var(axis=0)
            nonzero = (imputed != 0).mean(axis=0)
        keep = (
            ~np.isnan(medians)
            & (variance >= self.variance_threshold)
            & (nonzero >= self.nonzero_fraction_threshold)
        )
        if not keep.any():
            raise DegenerateTableError("preprocessing removed every feature")
        names = X.schema.names
        self.medians_ = {names[j]: float(medians[j]) for j in np.flatnonzero(keep)}
        self.dropped_ = [names[j] for j in np.flatnonzero(~keep)]
        self.variances_ = dict(zip(names, variance.tolist()))
        self.nonzero_fractions_ = dict(zip(names, nonzero.tolist()))
        return self

    def transform(self, X: CohortTable) -> CohortTable:
        check_is_fitted(self, "medians_")
        kept = list(self.medians_)
        missing = [n for n in kept if n not in X.schema]
        if missing:
            raise DegenerateTableError(f"table lacks fitted feature {missing[0]!r}")
        schema = X.schema.subset(kept)
        cols, entries = [], []
        for spec in schema.entries:
            col = X.column(spec.name)
            gaps = np.isnan(col)
            med = self.medians_[spec.name]
            if spec.kind == "count" and gaps.any() and not float(med).is_integer():
                # a half-integer median is no longer a count
                spec = replace(spec, kind="continuous")
            entries.append(spec)
            cols.append(np.where(gaps, med, col))
        schema = FeatureSchema(tuple(entries), schema.expert_subset)
        values = np.column_stack(cols) if cols else np.empty((X.n_rows, 0))
        return X.with_features(schema, values)


def preprocess(table: CohortTable, cfg: PreprocessConfig = None) -> CohortTable:
    """Fit a :class:`CohortPreprocessor` on ``table`` and apply it."""
    cfg = cfg or PreprocessConfig()
    pre = CohortPreprocessor(cfg.variance_threshold, cfg.nonzero_fraction_threshold)
    return pre.fit_transform(table)
