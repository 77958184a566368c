"""Multi-scale graph learning for drug-drug interaction type prediction."""

__version__ = "0.1.0"
