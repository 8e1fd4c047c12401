"""Exact computation and verification of conservation laws for PDE systems."""

from .expr import Context, Expr, equal
from .scalars import RatFunc, nf_linear

__all__ = ["Context", "Expr", "equal", "RatFunc", "nf_linear"]
