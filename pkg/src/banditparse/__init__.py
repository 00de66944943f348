"""Counterfactual learning for a neural geo semantic parser from logged bandit feedback."""

__version__ = "0.1.0"
