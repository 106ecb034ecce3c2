"""Effective slip laws at a fracture/porous-medium interface.

Boundary-layer cell problems, resolved Navier-Stokes sweeps over the pore
scale, corrector composition, and convergence-rate / slip-law verification.
"""

from .boundary_layer import (
    BoundaryLayerResult,
    fit_decay,
    solve_first_layer,
    solve_second_layer,
)
from .dns import DNSSolution, interface_trace, run_dns
from .error_analysis import (
    SlipSample,
    error_field,
    fit_rates,
    saffman_check,
    slip_regression,
    weighted_norm,
)
from .geometry import (
    BLSlab,
    GridDomain,
    UnitCell,
    build_bl_slab,
    build_grid_domain,
    build_unit_cell,
)
from .saddle import (
    SaddleProblem,
    SolveStats,
    StaggeredField,
    discrete_divergence,
    norms,
    solve_navier_stokes,
    solve_stokes,
)
from .scaling import (
    ScalingParams,
    compose_approximation,
    interface_shear,
    poiseuille,
    pressure_approximation,
    validate_hypotheses,
)

__version__ = "0.1.0"
