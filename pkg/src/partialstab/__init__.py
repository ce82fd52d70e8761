"""Numerical lab for increasing stability in the partial-data Schrodinger inverse problem."""

from ._validation import AssumptionViolation, ConvergenceError
from .carleman import (CarlemanCalibrator, CarlemanReport, calibrate_constants, calibration_family, evaluate_carleman,
                       evaluate_remark_form, random_test_fields)
from .cgo import (CGOCalibrator, CGOSolution, ZetaPair, cgo_norm_bounds, make_zeta_pair, solve_remainder,
                  verify_remainder_bound)
from .dnmap import DNOperator, BoundaryNormCalculus, build_dn, operator_norm_fractional, restrict_partial
from .fields import PotentialField, sobolev_norm, zero_potential
from .forward import HelmholtzSolver, dirichlet_spectrum_check, neumann_trace, solve_dirichlet
from .fourier import (FourierBoundEstimator, FourierModeEstimate, boundary_term_check, estimate_fourier_mode,
                      green_identity_residual, vessella_continuation_test)
from .geometry import Ball, Box, BoundaryPartition, DomainGrid, build_grid, partition_boundary, unit_cube
from .stability import (ScheduleParams, StabilityBoundEstimator, StabilityRecord, hminus1_split,
                        interpolate_linfty, large_gap_bound, run_sweep, schedule_params, stability_rhs)

__version__ = "0.1.0"

__all__ = [
    "AssumptionViolation", "ConvergenceError", "CarlemanCalibrator", "CarlemanReport", "calibrate_constants", "calibration_family",
    "random_test_fields",
    "evaluate_carleman", "evaluate_remark_form", "CGOCalibrator", "CGOSolution", "ZetaPair", "cgo_norm_bounds",
    "make_zeta_pair", "solve_remainder", "verify_remainder_bound", "DNOperator", "BoundaryNormCalculus",
    "build_dn", "operator_norm_fractional", "restrict_partial", "PotentialField", "sobolev_norm",
    "zero_potential", "HelmholtzSolver", "dirichlet_spectrum_check", "neumann_trace", "solve_dirichlet",
    "FourierBoundEstimator", "FourierModeEstimate", "boundary_term_check", "estimate_fourier_mode",
    "green_identity_residual", "vessella_continuation_test", "Ball", "Box", "BoundaryPartition", "DomainGrid",
    "build_grid", "partition_boundary", "unit_cube", "ScheduleParams", "StabilityBoundEstimator",
    "StabilityRecord", "hminus1_split", "interpolate_linfty", "large_gap_bound", "run_sweep", "schedule_params",
    "stability_rhs",
]
