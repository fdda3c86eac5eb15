"""Adaptive fictitious-domain P1 finite elements with a nested inexact Uzawa solver.

The Dirichlet problem on a polygon is embedded in a square box; the boundary
condition is enforced through a piecewise-constant multiplier on the curve,
updated by a wavelet-preconditioned Richardson iteration whose elliptic
solves are performed by an adaptive finite element method.
"""

from .afem import AfemResult, afem
from .boundary import (BoundaryCurve, BoundaryPartition, MultiplierFn, h_minus_half_norm,
                       make_partition, precond_apply, precond_apply_inverse, project_l2,
                       prolongate)
from .diagnostics import (alt_outer_estimate, exact_errors, faermann_outer, fit_rate,
                          schur_spectrum, uzawa_error)
from .estimator import estimate, mark
from .femcore import (CouplingGeometry, FemFn, assemble_load, assemble_stiffness,
                      boundary_residual, intersect_curve_mesh, solve, trace_on_curve)
from .mesh import Triangulation, criss_cross_box, make_bottom_mesh, refine
from .testproblem import LShapeProblem
from .uzawa import UzawaParams, UzawaTrace, compute_tolerance, run_uzawa

__version__ = "0.1.0"

__all__ = [
    "AfemResult", "afem", "BoundaryCurve", "BoundaryPartition", "MultiplierFn",
    "h_minus_half_norm", "make_partition", "precond_apply", "precond_apply_inverse",
    "project_l2", "prolongate", "alt_outer_estimate", "exact_errors", "faermann_outer",
    "fit_rate", "schur_spectrum", "uzawa_error", "estimate", "mark", "CouplingGeometry",
    "FemFn", "assemble_load", "assemble_stiffness", "boundary_residual",
    "intersect_curve_mesh", "solve", "trace_on_curve", "Triangulation", "criss_cross_box",
    "make_bottom_mesh", "refine", "LShapeProblem", "UzawaParams", "UzawaTrace",
    "compute_tolerance", "run_uzawa",
]
