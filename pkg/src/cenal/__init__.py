"""Bayesian active learning for censored regression."""

__version__ = "0.1.0"
