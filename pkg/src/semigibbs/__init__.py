"""Semiclassical limits of quantum Gibbs states and their entropies.

Truncated Fock representations of the eps-scaled CCR algebra, Wick and
anti-Wick quantization of polynomial symbols, von Neumann and Wehrl
entropies of Gibbs states, and the dyadic coherent-lattice construction.
"""
__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ArgumentError,
    ClassSViolation,
    ConfigError,
    ConvergenceError,
    DegenerateBasisError,
    InvalidDensityError,
    ResourceError,
    SemigibbsError,
    TruncationError,
)
from .fock import FockSpec, OperatorMatrix, StateVector  # noqa: F401
from .symbols import PolySymbol, SymbolClassS, SymbolExpansion, upper_symbol  # noqa: F401
