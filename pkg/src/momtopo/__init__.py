"""Density-based topology optimization of antenna Q-factor on MoM meshes."""

from .mesh import BasisSet, MeshError, TriMesh, build_rwg, generate_plate, generate_sphere, neighborhoods
from .operators import ETA0, FeedSpec, OperatorSet, QuadratureOrder, build_operators
from .topopt import OptConfig, OptimizationResult, optimize

__version__ = "0.1.0"

__all__ = [
    "BasisSet", "MeshError", "TriMesh", "build_rwg", "generate_plate", "generate_sphere", "neighborhoods",
    "ETA0", "FeedSpec", "OperatorSet", "QuadratureOrder", "build_operators",
    "OptConfig", "OptimizationResult", "optimize", "__version__",
]
