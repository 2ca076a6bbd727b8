"""Semantic-alignment few-shot classification head and experiment harness."""

__version__ = "0.1.0"
