"""Spectral geometry of the noncommutative 4-torus with a conformally perturbed metric.

Modules
-------
algebra      smooth elements, truncation boxes and the modular operator
symbols      exact pseudodifferential symbol calculus and the resolvent parametrix
heat_kernel  the b2 term, its angular integration and the modular curvature functions
curvature    closed forms of K and H, the scalar curvature and the action
spectral     truncated Laplacians, Weyl law, heat trace and Dixmier estimates
residue      noncommutative residue of classical symbols
"""

from .algebra import (DomainError, FourierElement, IncompatibleAlgebraError, ModularCalculus,
                      TruncationBox, theta_matrix)

__version__ = "0.1.0"

__all__ = ["DomainError", "FourierElement", "IncompatibleAlgebraError", "ModularCalculus",
           "TruncationBox", "theta_matrix", "__version__"]
