from .model import (INF, LinConstraint, MilpModel, ModelError, Sense, SolveResult, SolveStats,
                    Status, VarKind, VarRef)
from .simplex import SimplexOptions, solve_lp

__all__ = ["INF", "LinConstraint", "MilpModel", "ModelError", "Sense", "SolveResult", "SolveStats",
           "Status", "VarKind", "VarRef", "SimplexOptions", "solve_lp"]
from .bnb import MilpOptions, solve_milp

__all__ += ["MilpOptions", "solve_milp"]
