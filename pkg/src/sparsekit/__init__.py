"""sparsekit: linear-sized spectral sparsifiers via barrier-guided sampling."""

__version__ = "0.1.0"

from .errors import (BarrierViolationError, ConfigError, DisconnectedGraphError,
                     GraphFormatError, SolverConvergenceError, SparsekitError)
from .graphs import (VerificationReport, WeightedGraph, generate, incidence,
                     laplacian, laplacian_sparse, load_graph, save_graph,
                     verify_sparsifier)
from .vectorset import (ValidationReport, VectorSet, extract_sparsifier,
                        from_graph, validate_decomposition)
from .potential import (BarrierState, barrier_increments, batch_size,
                        bss_rank1_bound, initial_state, lambda_extremes,
                        potential, rank1_potential_bounds,
                        relative_effective_resistance)
from .sparsifier import (RunCaps, SparsifierResult, check_half_barrier,
                         run_almost_linear, run_randomized_bss, sample_batch)
from .fastpath import (EstimatorConfig, GraphBarrierState, apply_inv_sqrt_upper,
                       estimate_lambda_mins, estimate_resistances, eta_schedule,
                       lower_quad_form, make_solver, taylor_coeffs,
                       upper_quad_form)

__all__ = [
    "BarrierState", "BarrierViolationError", "ConfigError",
    "DisconnectedGraphError", "EstimatorConfig", "GraphBarrierState",
    "GraphFormatError", "RunCaps", "SolverConvergenceError", "SparsekitError",
    "SparsifierResult", "ValidationReport", "VectorSet", "VerificationReport",
    "WeightedGraph", "apply_inv_sqrt_upper", "barrier_increments", "batch_size",
    "bss_rank1_bound", "check_half_barrier", "estimate_lambda_mins",
    "estimate_resistances", "eta_schedule", "extract_sparsifier", "from_graph",
    "generate", "incidence", "initial_state", "lambda_extremes", "laplacian",
    "laplacian_sparse", "load_graph", "lower_quad_form", "make_solver",
    "potential", "rank1_potential_bounds", "relative_effective_resistance",
    "run_almost_linear", "run_randomized_bss", "sample_batch", "save_graph",
    "upper_quad_form", "validate_decomposition", "verify_sparsifier",
]
