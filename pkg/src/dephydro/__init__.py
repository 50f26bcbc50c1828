"""Facilitated exclusion on the lattice and its conservation law.

Submodules: ``lattice`` (windows, configurations, profiles), ``clocks``
(keyed Poisson clock fields), ``dynamics`` (evolution and generator checks),
``coupling`` (discrepancies and audits), ``claw`` (Riemann solver, Godunov
scheme), ``observables`` and ``experiments``; ``cli`` is the command line.
"""

from dephydro.claw import flux, godunov_evolve, riemann_solve
from dephydro.clocks import Purpose, RngKey
from dephydro.dynamics import evolve, stationarity_identity_check
from dephydro.lattice import Configuration, DensityProfile, Ring, Segment, centered_segment, sample_product

__version__ = "0.1.0"

__all__ = [
    "Configuration",
    "DensityProfile",
    "Purpose",
    "Ring",
    "RngKey",
    "Segment",
    "centered_segment",
    "evolve",
    "flux",
    "godunov_evolve",
    "riemann_solve",
    "sample_product",
    "stationarity_identity_check",
]
