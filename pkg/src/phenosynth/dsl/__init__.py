"""A small, sandboxed language for computable phenotype programs.

Programs are parsed against a set of feature names, evaluated row-wise over
a cohort table, measured (node count) and re-parameterised (numeric
literals) without ever executing host-language code.
"""
from .analysis import (
    ParamSlots,
    ProgramStats,
    apply_params,
    extract_params,
    features_used,
    literal_count,
    render,
    size,
    stats,
    walk,
)
from .grammar import GRAMMAR
from .interpreter import EvalFailure, EvalOutcome, evaluate, evaluate_columns
from .nodes import MAX_DEPTH, MAX_TOKENS, PhenotypeProgram
from .parser import ParseError, parse, parse_file

__all__ = [
    "GRAMMAR",
    "MAX_DEPTH",
    "MAX_TOKENS",
    "EvalFailure",
    "EvalOutcome",
    "ParamSlots",
    "ParseError",
    "PhenotypeProgram",
    "ProgramStats",
    "apply_params",
    "evaluate",
    "evaluate_columns",
    "extract_params",
    "features_used",
    "literal_count",
    "parse",
    "parse_file",
    "render",
    "size",
    "stats",
    "walk",
]
