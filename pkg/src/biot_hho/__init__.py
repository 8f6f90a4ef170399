"""Hybrid High-Order discretisations of the quasi-static Biot problem on
trapezoidal quadrilateral meshes, with HHO or SIP-DG Darcy pressure."""

from .coupling import assemble_bh, commutation_error, compute_infsup_constant, discrete_divergence
from .energy import coercivity_constants, energy_diagnostic
from .harness import ConvergenceReport, emit_csv, expected_dofs, run_convergence_study
from .manufactured import biot_benchmark, homogeneous_solution
from .mesh import PermeabilityField, build_trapezoidal_mesh, classify_boundary
from .solver import BiotConfig, run
from .space import HHOSpace

__version__ = "0.1.0"

__all__ = [
    "BiotConfig", "ConvergenceReport", "HHOSpace", "PermeabilityField",
    "assemble_bh", "biot_benchmark", "build_trapezoidal_mesh", "classify_boundary",
    "coercivity_constants", "commutation_error", "compute_infsup_constant", "discrete_divergence",
    "emit_csv", "energy_diagnostic", "expected_dofs", "homogeneous_solution",
    "run", "run_convergence_study",
]
