"""Simulation laboratory for multiqubit-tunneling probes of quantum annealers."""

__version__ = "0.1.0"
