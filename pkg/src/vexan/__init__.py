"""Numerical experiments for multilinear Calderon-Zygmund commutators on
variable exponent Lebesgue spaces.

Modules, bottom up: ``exponent`` (variable exponents), ``discretize``
(grids, grid functions, cube families), ``norms`` (Luxemburg and Orlicz
norms), ``maximal`` (maximal operators), ``operators`` (kernels and their
quadrature), ``commutators`` (commutators and Lipschitz-type norms),
``harness`` (experiments and reports) and ``cli``.
"""

from .discretize import GridFunction, UniformGrid
from .exponent import ExponentField
from .harness import KINDS, ExperimentSpec, run_experiment, run_suite
from .norms import luxemburg_norm
from .operators import apply_multilinear, make_fractional_kernel, make_mollified_cz_kernel

__version__ = "0.1.0"

__all__ = [
    "ExperimentSpec",
    "ExponentField",
    "GridFunction",
    "KINDS",
    "UniformGrid",
    "apply_multilinear",
    "luxemburg_norm",
    "make_fractional_kernel",
    "make_mollified_cz_kernel",
    "run_experiment",
    "run_suite",
]
