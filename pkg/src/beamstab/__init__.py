"""Boundary-feedback stabilization lab for geometrically exact beams."""

from .params import BeamParams, BeamMatrices, derive_matrices, optimal_feedback

__all__ = ["BeamParams", "BeamMatrices", "derive_matrices", "optimal_feedback"]
__version__ = "0.1.0"
