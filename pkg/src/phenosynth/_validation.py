"""Input checks shared by the estimator wrappers."""
from __future__ import annotations

from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from .cohort.schema import CohortTable
from .dsl import PhenotypeProgram, parse


def as_columns(X, feature_names: Optional[Sequence[str]] = None) -> Tuple[Dict[str, np.ndarray], int, Optional[np.ndarray]]:
    """(columns, n_rows, row_ids) from a CohortTable, a DataFrame, a mapping
    of equal-length arrays, or a 2-D array with ``feature_names``."""
    if isinstance(X, CohortTable):
        return X.columns(), X.n_rows, X.ids
    if hasattr(X, "columns") and hasattr(X, "to_numpy"):
        cols = {str(c): np.asarray(X[c], dtype=float) for c in X.columns}
        return cols, len(X), np.asarray([str(i) for i in X.index], dtype=object)
    if isinstance(X, Mapping):
        cols = {str(k): np.asarray(v, dtype=float).ravel() for k, v in X.items()}
        lengths = {len(v) for v in cols.values()}
        if len(lengths) > 1:
            raise ValueError("all columns must have the same length")
        return cols, lengths.pop() if lengths else 0, None
    arr = np.asarray(X, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {arr.shape}")
    if feature_names is None or len(feature_names) != arr.shape[1]:
        raise ValueError("a 2-D array needs feature_names with one name per column")
    return {str(n): arr[:, j] for j, n in enumerate(feature_names)}, arr.shape[0], None


def check_binary_labels(y, n_rows: int) -> np.ndarray:
    y = np.asarray(y).ravel()
    if y.shape != (n_rows,):
        raise ValueError(f"y has {y.size} entries for {n_rows} rows")
    if y.dtype != bool and not np.all(np.isin(y, (0, 1))):
        raise ValueError("y must be binary (0/1 or bool)")
    return y.astype(bool)


def check_program(program, names) -> PhenotypeProgram:
    if isinstance(program, PhenotypeProgram):
        # re-parse the rendered text so references are checked against these names
        from .dsl import render

        return parse(render(program), names)
    if isinstance(program, (str, bytes)):
        return parse(program, names)
    raise TypeError(f"expected program text or PhenotypeProgram, got {type(program).__name__}")


def check_threshold(threshold) -> float:
    t = float(threshold)
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    return t
