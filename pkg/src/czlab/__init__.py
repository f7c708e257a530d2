"""Grid laboratory for commutators of singular integrals and related constructions."""

from . import commutator, decomp, factorization, grid, jacobian, kernels, spaces
from .grid import Ball, Cube, Grid, GridFunction

__version__ = "0.1.0"

__all__ = ["Ball", "Cube", "Grid", "GridFunction", "commutator", "decomp", "factorization",
           "grid", "jacobian", "kernels", "spaces"]
