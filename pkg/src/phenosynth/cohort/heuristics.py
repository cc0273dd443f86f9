"""Rule-based heuristic labels for the three hypertension phenotypes."""
from __future__ import annotations

from typing import Dict, Mapping, Tuple

import numpy as np

from ..exceptions import ConfigurationError, SchemaError
from .schema import PHENOTYPES

REQUIRED_FEATURES: Dict[str, Tuple[str, ...]] = {
    "HTN": ("htn_dx_count",),
    "HTN-HypoK": ("htn_dx_count", "low_K_N", "Med_Potassium_N", "Dx_HypoK_N"),
    "aTRH": ("high_BP_during_htn_meds_3", "sum_enc_during_htn_meds_4_plus"),
}

# The same rules written as phenotype programs. Used as oracle responses in
# scripted runs and as tuning fixtures.
HEURISTIC_PROGRAMS: Dict[str, str] = {
    "HTN": (
        "phenotype predict_hypertension {\n"
        "  return htn_dx_count >= 2;\n"
        "}\n"
    ),
    "HTN-HypoK": (
        "phenotype predict_hypertension {\n"
        "  return htn_dx_count >= 2 and (low_K_N >= 2 or Med_Potassium_N >= 2 or Dx_HypoK_N >= 2);\n"
        "}\n"
    ),
    "aTRH": (
        "phenotype predict_hypertension {\n"
        "  return high_BP_during_htn_meds_3 >= 2 or sum_enc_during_htn_meds_4_plus >= 2;\n"
        "}\n"
    ),
}


def _check_phenotype(phenotype):
    if phenotype not in PHENOTYPES:
        raise ConfigurationError(f"unknown phenotype {phenotype!r}; expected one of {PHENOTYPES}")


def _rule(phenotype: str, get) -> object:
    if phenotype == "HTN":
        return get("htn_dx_count") >= 2
    if phenotype == "HTN-HypoK":
        htn = get("htn_dx_count") >= 2
        hypok = (get("low_K_N") >= 2) | (get("Med_Potassium_N") >= 2) | (get("Dx_HypoK_N") >= 2)
        return htn & hypok
    return (get("high_BP_during_htn_meds_3") >= 2) | (get("sum_enc_during_htn_meds_4_plus") >= 2)


def apply_heuristic(phenotype: str, row) -> bool:
    """Evaluate the heuristic rule for ``phenotype`` on a single patient.

    ``row`` is a :class:`PatientRecord` or a plain feature mapping.
    """
    _check_phenotype(phenotype)
    features: Mapping[str, float] = getattr(row, "features", row)

    def get(name):
        try:
            return features[name]
        except KeyError:
            raise SchemaError(f"heuristic for {phenotype} requires feature {name!r}", name) from None

    return bool(_rule(phenotype, get))


def heuristic_labels(phenotype: str, columns: Mapping[str, np.ndarray]) -> np.ndarray:
    """Vectorised :func:`apply_heuristic` over column arrays."""
    _check_phenotype(phenotype)

    def get(name):
        try:
            return np.asarray(columns[name], dtype=float)
        except KeyError:
            raise SchemaError(f"heuristic for {phenotype} requires feature {name!r}", name) from None

    return np.asarray(_rule(phenotype, get), dtype=bool)
