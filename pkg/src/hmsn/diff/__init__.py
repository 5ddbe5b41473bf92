"""Reverse-mode differentiation on a numpy tape."""

from . import ops
from .check import finite_diff_check, numeric_gradient, tape_gradient
from .graph import Graph, Node, NonFiniteError, ScalarLossError, backward, forward, grad, value

__all__ = [
    "Graph",
    "Node",
    "NonFiniteError",
    "ScalarLossError",
    "backward",
    "finite_diff_check",
    "forward",
    "grad",
    "numeric_gradient",
    "ops",
    "tape_gradient",
    "value",
]
