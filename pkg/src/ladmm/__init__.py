"""Adaptive linearized ADMM solvers, a LASSO test bed and convergence diagnostics."""

from .model import Iterate, SplitProblem, SpectralNormError, gram_frobenius_norm, shrink, spectral_norm
from .solvers import (
    AdaptiveState,
    IterationRecord,
    RunSummary,
    SolverConfig,
    solve_adaptive,
    solve_oladmm,
)
from .lasso import LassoInstance, generate, kkt_residual, lasso_objective, to_split_form

__all__ = [
    "AdaptiveState",
    "Iterate",
    "IterationRecord",
    "LassoInstance",
    "RunSummary",
    "SolverConfig",
    "SpectralNormError",
    "SplitProblem",
    "generate",
    "gram_frobenius_norm",
    "kkt_residual",
    "lasso_objective",
    "shrink",
    "solve_adaptive",
    "solve_oladmm",
    "spectral_norm",
    "to_split_form",
]

__version__ = "0.1.0"
