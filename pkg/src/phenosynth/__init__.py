"""LLM-guided synthesis and evaluation of computable phenotype programs."""

__version__ = "0.1.0"
