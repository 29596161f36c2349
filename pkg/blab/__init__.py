"""
Beltrami Lab - Numerical toolkit for the Beltrami equation

Principal solutions, Dirichlet problems in the disk, admissibility tests
for dilatation majorants, and empirical compactness experiments.
"""

__version__ = "0.1.0"
__author__ = "Pilan AI"
__license__ = "AGPL-3.0"

from .errors import BlabError
from .fields import ComplexField, DilatationField, GridSpec, MapField, RealField
from .solver import SolverConfig, solve_principal
from .transforms import TransformPlan

__all__ = [
    "BlabError",
    "ComplexField",
    "DilatationField",
    "GridSpec",
    "MapField",
    "RealField",
    "SolverConfig",
    "TransformPlan",
    "solve_principal",
    "__version__",
]
