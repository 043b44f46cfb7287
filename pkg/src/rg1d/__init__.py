"""Rigorous renormalization-group engine for 1d interacting lattice
fermions.

Modules: model (parameters, potentials, Fermi-point data), propagators
(free kernels and single-scale covariances), g1map (perturbed quadratic
map and sector sweeps), rgflow (coupling flow with inequality checks),
renorm (Zhat ratios and exponents), nusolver (counterterm fixed point),
correlations (response assembly against closed forms), oracle
(independent brute-force references), cli (batch front-end).
"""

from . import (correlations, g1map, model, nusolver, oracle,
               propagators, renorm, rgflow)
from .model import (FermiPoint, InteractionPotential, ModelParams,
                    on_site_potential, u_v_potential)

__all__ = [
    "correlations", "g1map", "model", "nusolver", "oracle",
    "propagators", "renorm", "rgflow",
    "FermiPoint", "InteractionPotential", "ModelParams",
    "on_site_potential", "u_v_potential",
]

__version__ = "0.1.0"
