"""DC optimal power flow with a unified flexible-branch MILP model."""
from .branch import BigMOptions, compute_big_m, build_branch_block, extract_branch_state
from .formulations import Formulation, assemble, solve, solve_lexicographic
from .ingest import apply_overlay, load_case, load_overlay, parse_case, parse_overlay
from .network import BranchParams, BranchTypology, Bus, Generator, Horizon, SystemCase, validate_case

__version__ = "0.1.0"

__all__ = [
    "BigMOptions", "BranchParams", "BranchTypology", "Bus", "Formulation", "Generator", "Horizon",
    "SystemCase", "apply_overlay", "assemble", "build_branch_block", "compute_big_m",
    "extract_branch_state", "load_case", "load_overlay", "parse_case", "parse_overlay", "solve",
    "solve_lexicographic", "validate_case",
]
