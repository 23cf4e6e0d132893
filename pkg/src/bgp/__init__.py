"""Biased random graph process: simulation, ODE critical times, exact couplings."""

__version__ = "0.1.0"
