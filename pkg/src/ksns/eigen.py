"""Smallest Laplacian eigenvalues: the two Poincare constants.

``lambda_neumann`` computes the smallest nonzero eigenvalue of the
zero-flux Laplacian restricted to mean-zero functions, ``lambda_dirichlet``
the smallest eigenvalue with homogeneous Dirichlet data.  Both use inverse
power iteration with a conjugate-gradient inner solve; the Neumann variant
deflates the constant mode after every operator application.
"""

from dataclasses import dataclass

import numpy as np

from .grid import Grid, ScalarField
from .linstep import SolverError, _lap_dirichlet, _lap_zero_flux, _neg_lap_diag, solve_cg

MAX_OUTER = 500


@dataclass
class EigenResult:
    lam: float
    eigenfield: ScalarField
    iterations: int
    residual: float


def _inverse_power(grid: Grid, apply_op, diag, tol: float, deflate: bool,
                   tag: str) -> EigenResult:
    rng = np.random.default_rng(20240601)
    x = rng.standard_normal(grid.shape)
    if deflate:
        x -= x.mean()
    x /= np.linalg.norm(x)
    lam = float((x * apply_op(x)).sum())
    inner_tol = min(tol * 1e-2, 1e-12)
    total_inner = 0
    for outer in range(1, MAX_OUTER + 1):
        y, report = solve_cg(apply_op, x, diag, inner_tol,
                             x0=x / lam, project_mean=deflate, tag=tag)
        total_inner += report.iterations
        y /= np.linalg.norm(y)
        Ay = apply_op(y)
        if deflate:
            Ay -= Ay.mean()
        lam_new = float((y * Ay).sum())
        res = float(np.linalg.norm(Ay - lam_new * y))
        converged = res <= tol and abs(lam_new - lam) <= 0.1 * tol * max(lam_new, 1.0)
        x, lam = y, lam_new
        if converged:
            vol_norm = np.sqrt((x ** 2).sum() * grid.cell_volume)
            field = ScalarField(grid, x / vol_norm)
            return EigenResult(lam=lam, eigenfield=field,
                               iterations=outer, residual=res)
    raise SolverError(f"{tag}: inverse power iteration did not converge "
                      f"within {MAX_OUTER} iterations (ill-conditioned?)")


def lambda_neumann(grid: Grid, tol: float = 1e-8) -> EigenResult:
    """Smallest nonzero eigenvalue of the zero-flux Laplacian.

    The iteration runs on the mean-zero subspace (constant-mode deflation
    after every matrix-vector product), mirroring the restriction that
    makes the operator invertible.  Residual ||A psi - lam psi|| / ||psi||
    is at most ``tol`` on return.
    """
    if not 0.0 < tol <= 1e-3:
        raise ValueError("tol must lie in (0, 1e-3]")
    diag = _neg_lap_diag(grid, "neumann0")

    def apply_op(v):
        return -_lap_zero_flux(grid, v)

    return _inverse_power(grid, apply_op, diag, tol, deflate=True, tag="eig-neumann")


def lambda_dirichlet(grid: Grid, tol: float = 1e-8) -> EigenResult:
    """Smallest eigenvalue of the Dirichlet Laplacian (no deflation)."""
    if not 0.0 < tol <= 1e-3:
        raise ValueError("tol must lie in (0, 1e-3]")
    diag = _neg_lap_diag(grid, "dirichlet0")

    def apply_op(v):
        return -_lap_dirichlet(grid, v)

    return _inverse_power(grid, apply_op, diag, tol, deflate=False, tag="eig-dirichlet")
