"""Batch rendering of annealer-lab result CSVs into static figures."""

__version__ = "0.1.0"
