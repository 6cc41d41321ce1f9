"""Bounded solutions of degenerate p-Laplacian-type equations on punctured
and exterior planar domains: radial barrier profiles, a staircase-grid energy
minimizer, nested-domain continuation, and their verification checks."""

from .operator_model import (
    ConstantFamily,
    DamascelliReport,
    OperatorError,
    OperatorSpec,
    QuadratureError,
    RationalFamily,
    TableFamily,
    energy_density,
    flux,
    make_operator,
    phi,
    phi_inverse,
    verify_damascelli,
)
from .radial import (
    BarrierError,
    RadialBarrier,
    barrier_value,
    choose_a_large,
    choose_a_small,
    envelope_bounds,
    psi_value,
)
from .mesh import (
    DomainConfig,
    Mesh,
    MeshError,
    Puncture,
    assemble_energy,
    assemble_gradient,
    build_mesh,
    override_dirichlet,
)
from .solver import (
    DiscreteSolution,
    SolverError,
    SolverParams,
    compare_solutions,
    max_principle_report,
    solve,
)
from .continuation import (
    ContinuationError,
    ContinuationPlan,
    barrier_sandwich_check,
    liouville_check,
    lp_gradient_tail,
    run_continuation,
)

__version__ = "0.1.0"
