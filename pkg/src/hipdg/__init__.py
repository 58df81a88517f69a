"""Hybridizable interior penalty DG solvers for anisotropic diffusion on the unit square."""
from .assembly import (
    CoercivityCertificate,
    PenaltyConfig,
    Scheme,
    Solution,
    assemble_local,
    coercivity_certificate,
    condense,
    recover,
    solve_hip,
)
from .basis import build_dofmap, element_basis, quadrature_rule, trace_constant
from .errors import CoercivityError, DegenerateTensorError, NumericalFailure, SolverError
from .harness import RunConfig, run_alpha_sweep, run_convergence, run_kappa_ablation
from .mesh import Mesh, generate
from .verify import (
    ConvergenceReport,
    ecr,
    energy_error,
    enriched_error,
    expected_rates,
    l2_error,
    make_problem,
)

__version__ = "0.1.0"
