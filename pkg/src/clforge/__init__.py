"""Desk-scale continual-learning lab for language models of code."""

__version__ = "0.1.0"
