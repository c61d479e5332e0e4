"""Numerical laboratory for soliton collapse in k-equivariant wave maps into the sphere."""

__version__ = "0.1.0"

from .profiles import HomotopyClass, SolitonProfile  # noqa: E402
from .grid import RadialGrid, parse_grid_spec  # noqa: E402
from .functionals import FieldState, compute_constants, make_initial_data  # noqa: E402

__all__ = [
    "__version__",
    "HomotopyClass",
    "SolitonProfile",
    "RadialGrid",
    "parse_grid_spec",
    "FieldState",
    "compute_constants",
    "make_initial_data",
]
