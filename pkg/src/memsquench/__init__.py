"""Moving-mesh simulation of the nonlocal MEMS quenching problem."""
from .model import InitialData, ProblemSpec, SolutionState, initial_state
from .quadrature import MeshState

__all__ = ["InitialData", "MeshState", "ProblemSpec", "SolutionState", "initial_state"]
__version__ = "0.1.0"
