"""scikit-learn style wrappers around phenotype programs and the SEDI loop."""
from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_columns, check_binary_labels, check_program, check_threshold
from .cohort.schema import CohortTable
from .dsl import apply_params, evaluate_columns, extract_params, render
from .dsl.interpreter import ProgramRuntimeError
from .exceptions import ConfigurationError
from .metrics import auprc
from .prompts import PromptSpec
from .sedi import SediConfig, run_sedi
from .tuner import TuneConfig, optimize


class _ProbaMixin:
    classes_ = np.array([0, 1])

    def predict_proba(self, X):
        p = self.decision_function(X)
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.decision_function(X) >= check_threshold(self.threshold)).astype(int)


class PhenotypeProgramClassifier(_ProbaMixin, ClassifierMixin, BaseEstimator):
    """A fixed phenotype program used as a classifier.

    ``fit`` only checks the program against the training columns, unless
    ``tune=True``, in which case the program's numeric literals are tuned
    for training AUPRC first.
    """

    def __init__(self, source=None, threshold=0.5, tune=False, tune_budget=1000, random_state=0):
        self.source = source
        self.threshold = threshold
        self.tune = tune
        self.tune_budget = tune_budget
        self.random_state = random_state

    def fit(self, X, y=None, feature_names=None):
        if self.source is None:
            raise ConfigurationError("source program is required")
        cols, n, _ = as_columns(X, feature_names)
        self.feature_names_in_ = np.array(list(cols), dtype=object)
        self.n_features_in_ = len(cols)
        program = check_program(self.source, list(cols))
        self.tune_result_ = None
        if self.tune:
            if y is None:
                raise ValueError("tuning needs labels")
            yb = check_binary_labels(y, n)

            def objective(x):
                out = evaluate_columns(apply_params(program, x), cols, n)
                return auprc(out.probabilities, yb) if out.ok else -math.inf

            res = optimize(objective, extract_params(program).as_array(),
                           TuneConfig(budget=self.tune_budget, seed=self.random_state))
            if res.tuned_score > res.original_score:
                program = apply_params(program, res.tuned_values)
            self.tune_result_ = res
        self.program_ = program
        return self

    def decision_function(self, X, feature_names=None):
        check_is_fitted(self, "program_")
        cols, n, ids = as_columns(X, feature_names)
        out = evaluate_columns(self.program_, cols, n, ids)
        if not out.ok:
            raise ProgramRuntimeError(out.failure)
        return np.array(out.probabilities)

    @property
    def program_text_(self) -> str:
        check_is_fitted(self, "program_")
        return render(self.program_)


class SediPhenotyper(_ProbaMixin, ClassifierMixin, BaseEstimator):
    """Synthesise a phenotype program for a cohort table with an LLM client.

    ``X`` must be a :class:`CohortTable`; ``y`` (optional) replaces the
    table's label for the configured phenotype and label source.
    """

    def __init__(self, client=None, phenotype="aTRH", richness="rich", feature_set="expert",
                 strategy="sedi", max_iterations=10, threshold=0.5, label_source="heuristic", random_state=0):
        self.client = client
        self.phenotype = phenotype
        self.richness = richness
        self.feature_set = feature_set
        self.strategy = strategy
        self.max_iterations = max_iterations
        self.threshold = threshold
        self.label_source = label_source
        self.random_state = random_state

    def _check_table(self, X):
        if not isinstance(X, CohortTable):
            raise TypeError("SediPhenotyper needs a CohortTable")
        return X

    def fit(self, X, y=None):
        X = self._check_table(X)
        if self.client is None:
            raise ConfigurationError("an LLM client is required")
        if y is not None:
            X = X.with_label(self.phenotype, self.label_source, check_binary_labels(y, X.n_rows))
        spec = PromptSpec(self.phenotype, self.richness, self.feature_set, X.schema.dictionary())
        cfg = SediConfig(max_iterations=self.max_iterations, strategy=self.strategy, seed=self.random_state,
                         threshold=check_threshold(self.threshold), label_source=self.label_source)
        self.run_ = run_sedi(spec, X, self.client, cfg)
        self.program_ = self.run_.final_program
        return self

    def decision_function(self, X):
        check_is_fitted(self, "run_")
        return self.run_.predict(self._check_table(X))
