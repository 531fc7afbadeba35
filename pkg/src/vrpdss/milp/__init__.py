"""MILP model builder, file writers, subtour separation and the external solver bridge."""
from .bridge import (BridgeConfig, BridgeError, InfeasibleModelError, LazyResult, RawSolution, SolverExitError,
                     SolverMissingError, SolverOutputError, find_solver, solve_lazy, solve_with_bridge,
                     solver_available)
from .esec import Support, esec_lhs, esec_row, separate_esec, support_from_values
from .extract import ExtractionError, encode_solution, extract_solution
from .lpfile import export_model, read_lp
from .start import default_start, integer_start, nearest_neighbour_tours
from .model import (CUT_GROUPS, GROUPS, ModelArtifact, ModelBuildError, ModelOptions, VarRegistry, build_model,
                    variable_values)

__all__ = [
    "BridgeConfig", "BridgeError", "InfeasibleModelError", "LazyResult", "RawSolution", "SolverExitError",
    "SolverMissingError", "SolverOutputError", "find_solver", "solve_lazy", "solve_with_bridge", "solver_available",
    "Support", "esec_lhs", "esec_row", "separate_esec", "support_from_values",
    "ExtractionError", "encode_solution", "extract_solution", "export_model", "read_lp",
    "CUT_GROUPS", "GROUPS", "ModelArtifact", "ModelBuildError", "ModelOptions", "VarRegistry", "build_model",
    "variable_values", "default_start", "integer_start", "nearest_neighbour_tours",
]
