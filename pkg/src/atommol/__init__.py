"""Atom-molecule hybrid gates, error budgets, qudit stabilizer protocols and critical chains."""

__version__ = "0.1.0"
