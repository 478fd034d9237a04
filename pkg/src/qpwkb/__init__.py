"""WKB analysis of adiabatic quasi-periodic Schroedinger operators.

H = -d^2/dx^2 + V(x) + alpha cos(eps x + zeta) with V 1-periodic and eps
small: band structure of the periodic part, complex momentum and its
actions, WKB predictions for the spectrum, and a brute-force oracle.
"""
from .hill import (PeriodicPotential, load_potential, monodromy, discriminant,
                   band_edges, bloch_momentum, quasimomentum_main,
                   finite_gap_quasimomentum, bloch_solutions, omega, lambda_n)

__all__ = ["PeriodicPotential", "load_potential", "monodromy", "discriminant", "band_edges",
           "bloch_momentum", "quasimomentum_main", "finite_gap_quasimomentum", "bloch_solutions",
           "omega", "lambda_n"]
__version__ = "0.1.0"
