"""Adaptive solve-estimate-mark-refine loop with an absolute tolerance."""

from dataclasses import dataclass, field

from . import estimator as est
from .femcore import intersect_curve_mesh, solve

C_UPP = 1.0


class AfemError(RuntimeError):
    """The round cap was hit before reaching the tolerance."""


@dataclass
class AfemResult:
    tau: object
    u: object
    cg: object
    field: object
    rounds: int
    records: list = field(default_factory=list)  # (n_tri, n_marked, scaled estimator)
    marked_total: int = 0

    @property
    def estimator(self):
        return self.field.scaled


def afem(tau0, f, chi, eps, theta, curve, partition, inplace=False, max_rounds=100,
         c_upp=C_UPP):
    """Refine ``tau0`` until ``c_upp * scaled estimator <= eps``.

    The starting mesh is never coarsened. With ``inplace=True`` the mesh
    object itself is refined.
    """
    if not eps > 0:
        raise ValueError("tolerance must be positive")
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    if not c_upp > 0:
        raise ValueError("c_upp must be positive")
    tau = tau0 if inplace else tau0.copy()
    records = []
    marked_total = 0
    rounds = 0
    while True:
        cg_ = intersect_curve_mesh(tau, curve, partition)
        u = solve(tau, f, chi, cg_)
        fld = est.estimate(u, f, chi, tau, cg_)
        val = fld.scaled
        if c_upp * val <= eps:
            records.append((tau.n_triangles, 0, val))
            return AfemResult(tau, u, cg_, fld, rounds, records, marked_total)
        if rounds >= max_rounds:
            raise AfemError(f"no convergence after {max_rounds} rounds (estimator {val:.3e} > {eps:.3e})")
        M = est.mark(fld.e, theta)
        records.append((tau.n_triangles, len(M), val))
        marked_total += len(M)
        tau.refine(M)
        rounds += 1


def write_trace_csv(result, path):
    with open(path, "w") as fh:
        fh.write("round,n_tri,n_marked,estimator_scaled\n")
        for k, (n, m, v) in enumerate(result.records):
            fh.write(f"{k},{n},{m},{v:.12g}\n")
