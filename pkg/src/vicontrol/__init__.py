"""Optimal control of a 1D elliptic variational inequality with an L1 term.

P1 finite elements on (-1, 1), arctan smoothing of the sign with continuation
in its parameter, a closed-form reference solution and convergence studies.
"""

from .analysis import (
    EocRow,
    EocTable,
    GammaPoint,
    GammaStudy,
    compute_eoc,
    emit_results,
    load_results,
    measure_errors,
    run_gamma_study,
    run_h_study,
)
from .exact import ExactParams, ExactSolution, default_params, make_exact
from .fem_core import (
    GridFunction,
    LinearSolveFailure,
    Mesh,
    TridiagonalMatrix,
    assemble_mass,
    assemble_stiffness,
    assemble_weighted_mass,
    error_norm,
    load_vector,
    quadrature,
    solve_banded,
)
from .forward import (
    NewtonConfig,
    NewtonReport,
    NonConvergence,
    beta_gamma,
    beta_gamma_prime,
    beta_gamma_second,
    solve_state,
    state_path,
)
from .kkt import (
    ContinuationSchedule,
    KktState,
    ProblemData,
    solve_kkt_continuation,
    solve_kkt_fixed_gamma,
)
from .verify import check_growth_condition, check_strong_stationarity

__version__ = "0.1.0"
