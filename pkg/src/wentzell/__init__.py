"""Semilinear heat and Schrodinger flows with dynamic boundary conditions on a warped cylinder."""

from .diagnostics import (
    CertificateReport,
    continuous_dependence,
    operator_certificates,
    smoothing_profile,
    trajectory_certificates,
)
from .elliptic import ResolventProblem, coercivity_estimate, resolvent_solve
from .evolution import (
    SolverConfig,
    Trajectory,
    evolution_family_oracle,
    existence_time,
    linear_evolve,
    linear_step,
    maximal_solve,
    picard_solve,
)
from .geometry import Grid, MetricFamily, breathing, build_grid, static_flat, tabulated, weights_at
from .kernels import BACKEND
from .nonlinearity import NonlinearTerm, evaluate, lipschitz_constant, power, validate_growth
from .operators import (
    StateVector,
    assemble_boundary_laplacian,
    assemble_bulk_laplacian,
    assemble_wentzell_operator,
    green_identity_residual,
    inner_product,
    neumann_trace,
)

__version__ = "0.1.0"
