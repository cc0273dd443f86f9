"""Prompt assembly.

Each template is kept in its original wording (``*_SOURCE``) and turned
into the text actually sent by two ordered substitution tables: one swaps
the scripting-language clause for the phenotype DSL, the other swaps the
function/DataFrame calling convention for a per-row program. Keeping the
source text separate makes the substitutions auditable.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .cohort.schema import EXPERT_FEATURES, PHENOTYPES
from .dsl.grammar import GRAMMAR
from .exceptions import ConfigurationError

PROGRAM_NAME = "predict_hypertension"

SYSTEM_SOURCE = (
    "You are an AI assistant that generates Python code based on a plain-text description "
    "of a function's purpose. You will receive a statement describing what the function "
    "should do. Your response must contain only a Python function, with no comments or "
    "explanations, that strictly follows the given description."
)

USER_SOURCE = (
    "Please create a Python function named `predict_hypertension' that takes a pandas "
    "DataFrame named `df' as input. The function should assess whether each patient "
    "(represented as rows) has evidence of <phenotype description>. The function must "
    "return an array of floats representing the probability for each row. The available "
    "columns and their meanings are provided as key value pairs in the following "
    "dictionary: `<variable dict>'. You may only use the features whose names appear in "
    "this dictionary."
)

DEBUG_SOURCE = (
    "Python encountered an error when trying to execute the function. Error Message: "
    "<error traceback as formatted text>. Please try again. **MAKE ABSOLUTELY SURE TO "
    "RETURN A SYNTACTICALLY VALID PYTHON FUNCTION."
)

REPORT_SOURCE = (
    "We evaluated the prediction function you provided on a set of < training dataset size> "
    "patients. <reinforcement message, if applicable>. Using the performance feedback below, "
    "please refine the Python function.\n"
    "\n"
    "# Overall Performance\n"
    "\n"
    "Area Under the Receiver-Operating Curve (AUROC): <AUROC, with 3 decimal places>\n"
    "\n"
    "Area under the precision-recall curve (AUPRC): <AUPCR, with 3 decimal places>\n"
    "\n"
    "The False Positive Rate is <FP rate, as percentage>\n"
    "\n"
    "The False Negative Rate is <FN rate, as percentage>"
)

FP_SOURCE = (
    "# Analysis of False Positives\n"
    "\n"
    "Please refine the function so that the <number of false positives> False Positives "
    "have lower predicted probabilities\n"
    "\n"
    "Below you will find <number of FP examples> example patients with false positive "
    "assessments to assist you in prescribing changes to the predict_hypertension function:\n"
    "\n"
    "<List containing the FP examples, formatted as dictionaries>"
)

FN_SOURCE = (
    "# Analysis of False Negatives\n"
    "\n"
    "Please refine the function so that the <number of false negatives> False Negatives "
    "have higher predicted probabilities\n"
    "\n"
    "Below you will find <number of FN examples> example patients with false negative "
    "assessments to assist you in prescribing changes to the predict_hypertension function:\n"
    "\n"
    "<List containing the FN examples, formatted as dictionaries>"
)

SUMMARY_SOURCE = (
    "# Summary of Request\n"
    "\n"
    "Please create an updated Python function named `predict_hypertension` that achieves "
    "fewer false positives and fewer false negatives than the one you previously provided.\n"
    "\n"
    "The function should assess whether each patient (represented as rows) has evidence "
    "of <phenotype>.\n"
    "\n"
    "As before, the function takes a pandas DataFrame named `df` as input.\n"
    "\n"
    "Recall that the available columns and their meanings are provided as key value pairs "
    "in a dictionary previously provided.\n"
    "\n"
    "As before, you may only use the features whose names appear in this dictionary.\n"
    "\n"
    "As before, your response must contain only a Python function, with no comments or "
    "explanations, that strictly follows the given description."
)

# scripting-language clause -> DSL clause
LANGUAGE_SUBSTITUTIONS: Tuple[Tuple[str, str], ...] = (
    ("Python code", "PhenoDSL code"),
    ("Python function", "PhenoDSL program"),
    ("PYTHON FUNCTION", "PHENODSL PROGRAM"),
    ("Python encountered", "PhenoDSL encountered"),
)

# function-name / calling-convention clause -> program clause
PROGRAM_SUBSTITUTIONS: Tuple[Tuple[str, str], ...] = (
    (" that takes a pandas DataFrame named `df' as input.", " that is evaluated on one patient (row) at a time."),
    ("As before, the function takes a pandas DataFrame named `df` as input.",
     "As before, the program is evaluated on one patient (row) at a time."),
    ("The function must return an array of floats representing the probability for each row.",
     "The program must return a float representing the probability for the row."),
    ("a function's purpose", "a program's purpose"),
    ("what the function should", "what the program should"),
    ("The function should", "The program should"),
    ("execute the function", "execute the program"),
    ("prediction function", "prediction program"),
    ("refine the function", "refine the program"),
    ("predict_hypertension function", "predict_hypertension program"),
)


def substitute(text: str) -> str:
    for old, new in LANGUAGE_SUBSTITUTIONS + PROGRAM_SUBSTITUTIONS:
        text = text.replace(old, new)
    return text


SYSTEM_TEMPLATE = substitute(SYSTEM_SOURCE) + "\n\nPhenoDSL grammar:\n\n" + GRAMMAR
USER_TEMPLATE = substitute(USER_SOURCE)
DEBUG_TEMPLATE = substitute(DEBUG_SOURCE)
REPORT_TEMPLATE = substitute(REPORT_SOURCE)
FP_TEMPLATE = substitute(FP_SOURCE)
FN_TEMPLATE = substitute(FN_SOURCE)
SUMMARY_TEMPLATE = substitute(SUMMARY_SOURCE)

PHENOTYPE_NAMES = {
    "HTN": "hypertension",
    "HTN-HypoK": "hypertension with hypokalemia",
    "aTRH": "treatment resistant hypertension",
}

HEURISTIC_DESCRIPTIONS = {
    "HTN": "2 or more hypertension Dx codes",
    "HTN-HypoK": (
        "2 or more hypertension Dx codes and either 2 or more low potassium test results, "
        "2 or more potassium supplementation prescriptions, or 2 or more hypokalemia diagnosis codes"
    ),
    "aTRH": (
        "2 or more high blood pressure measurements while prescribed 3 or more hypertension "
        "medications or 2 or more encounters while prescribed 4 or more hypertension medications"
    ),
}

REINFORCEMENT = {
    True: "Your latest changes improved performance",
    False: "Your latest changes did not improve performance",
}

RICHNESS = ("simple", "rich")
FEATURE_SETS = ("all", "expert")


@dataclass(frozen=True)
class PromptSpec:
    phenotype: str
    richness: str
    feature_set: str
    data_dictionary: Mapping[str, str] = field(hash=False)

    def __post_init__(self):
        if self.phenotype not in PHENOTYPES:
            raise ConfigurationError(f"unknown phenotype {self.phenotype!r}")
        if self.richness not in RICHNESS:
            raise ConfigurationError(f"richness must be one of {RICHNESS}")
        if self.feature_set not in FEATURE_SETS:
            raise ConfigurationError(f"feature_set must be one of {FEATURE_SETS}")

    def dictionary(self) -> Dict[str, str]:
        """The dictionary injected into the prompt (expert mode restricts it)."""
        d = dict(self.data_dictionary)
        if self.feature_set == "expert":
            d = {k: v for k, v in d.items() if k in EXPERT_FEATURES}
        return d

    def description(self) -> str:
        name = PHENOTYPE_NAMES[self.phenotype]
        if self.richness == "rich":
            return f"{name}, which we will define as {HEURISTIC_DESCRIPTIONS[self.phenotype]}"
        return name


def _fill(template: str, values: Mapping[str, str]) -> str:
    for key, val in values.items():
        template = template.replace(key, val)
    return template


def build_initial(spec: PromptSpec) -> Tuple[str, str]:
    """(system, user) texts that open every conversation."""
    d = spec.dictionary()
    if not d:
        raise ConfigurationError("data dictionary is empty")
    user = _fill(USER_TEMPLATE, {
        "<phenotype description>": spec.description(),
        "<variable dict>": repr(d),
    })
    return SYSTEM_TEMPLATE, user


def build_debug(error_text: str) -> str:
    if not error_text or not error_text.strip():
        raise ValueError("error text must be nonempty")
    return DEBUG_TEMPLATE.replace("<error traceback as formatted text>", error_text)


def format_value(v: float) -> str:
    return f"{float(v):.3f}"


def format_patient_example(row: Mapping[str, float], features, order: Sequence[str] = None) -> str:
    """Dictionary-literal text of the selected features, in schema order."""
    chosen = set(features)
    keys = [k for k in (order if order is not None else row.keys()) if k in chosen]
    return "{" + ", ".join(f"{k!r}: {format_value(row[k])}" for k in keys) + "}"


def format_decimal(x: float, places: int) -> str:
    """Round half up on the shortest decimal repr, so 0.5415 gives 0.542."""
    q = Decimal(1).scaleb(-places)
    return str(Decimal(repr(float(x))).quantize(q, rounding=ROUND_HALF_UP))


def format_rate(r: float) -> str:
    return format_decimal(100.0 * r, 1) + "%"


@dataclass(frozen=True)
class FeedbackBundle:
    auroc: float
    auprc: float
    fp_rate: float
    fn_rate: float
    fp_examples: Tuple[Tuple[Mapping[str, float], str], ...] = ()
    fn_examples: Tuple[Tuple[Mapping[str, float], str], ...] = ()
    improved: Optional[bool] = None
    n_false_positives: Optional[int] = None
    n_false_negatives: Optional[int] = None

    def __post_init__(self):
        for name in ("auroc", "auprc", "fp_rate", "fn_rate"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float, np.floating)) and 0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be in [0, 1], got {v!r}")
        if len(self.fp_examples) > 10 or len(self.fn_examples) > 10:
            raise ValueError("at most 10 examples per class")
        object.__setattr__(self, "fp_examples", tuple(self.fp_examples))
        object.__setattr__(self, "fn_examples", tuple(self.fn_examples))
        if self.n_false_positives is None:
            object.__setattr__(self, "n_false_positives", len(self.fp_examples))
        if self.n_false_negatives is None:
            object.__setattr__(self, "n_false_negatives", len(self.fn_examples))


def build_instruct(feedback: FeedbackBundle, spec: PromptSpec, train_size: int) -> str:
    """Performance report, optional FP and FN sections, then the summary."""
    report = REPORT_TEMPLATE
    if feedback.improved is None:
        report = report.replace(" <reinforcement message, if applicable>.", "")
    else:
        report = report.replace("<reinforcement message, if applicable>", REINFORCEMENT[bool(feedback.improved)])
    report = _fill(report, {
        "< training dataset size>": str(int(train_size)),
        "<AUROC, with 3 decimal places>": format_decimal(feedback.auroc, 3),
        "<AUPCR, with 3 decimal places>": format_decimal(feedback.auprc, 3),
        "<FP rate, as percentage>": format_rate(feedback.fp_rate),
        "<FN rate, as percentage>": format_rate(feedback.fn_rate),
    })
    sections: List[str] = [report]
    if feedback.fp_examples:
        sections.append(_fill(FP_TEMPLATE, {
            "<number of false positives>": str(feedback.n_false_positives),
            "<number of FP examples>": str(len(feedback.fp_examples)),
            "<List containing the FP examples, formatted as dictionaries>":
                "\n".join(text for _, text in feedback.fp_examples),
        }))
    if feedback.fn_examples:
        sections.append(_fill(FN_TEMPLATE, {
            "<number of false negatives>": str(feedback.n_false_negatives),
            "<number of FN examples>": str(len(feedback.fn_examples)),
            "<List containing the FN examples, formatted as dictionaries>":
                "\n".join(text for _, text in feedback.fn_examples),
        }))
    sections.append(SUMMARY_TEMPLATE.replace("<phenotype>", spec.description()))
    return "\n\n".join(sections)
