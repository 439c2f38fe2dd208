"""Numerical laboratory for the nonlocal porous medium equation and its inverse problem.

Modules, bottom up: :mod:`nonlinearity`, :mod:`kernels`, :mod:`discretization`,
:mod:`forward`, :mod:`dn_map`, :mod:`inversion`; the harness is :mod:`config`,
:mod:`pipeline`, :mod:`checks`, :mod:`io` and :mod:`cli`.
"""

__version__ = "0.1.0"

from .discretization import assemble_stiffness, build_geometry
from .errors import EXIT_CODES, NPMEError
from .kernels import FractionalConductivity, FractionalLaplacian, TabulatedKernel
from .nonlinearity import PowerLaw, RegularizedPowerLaw

__all__ = [
    "__version__",
    "PowerLaw",
    "RegularizedPowerLaw",
    "FractionalLaplacian",
    "FractionalConductivity",
    "TabulatedKernel",
    "build_geometry",
    "assemble_stiffness",
    "NPMEError",
    "EXIT_CODES",
]
