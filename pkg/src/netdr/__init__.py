"""netdr: doubly robust treatment effect estimation on networks.

Simulation designs with endogenous peer selection, graph neural network
nuisance fits trained with a small built-in autodiff engine, a network HAC
variance with a data-driven bandwidth, exact enumeration oracles for the
identification arguments on tiny instances, and a Monte Carlo harness.
"""
from __future__ import annotations

__version__ = "0.1.0"
