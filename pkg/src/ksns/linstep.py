"""Implicit linear substeps: Neumann heat with prescribed boundary flux,
the shifted Neumann heat operator, and a Chorin-projected Stokes step.

All solves go through one matrix-free conjugate gradient with Jacobi
preconditioning.  The heat steps support the theta time scheme (theta = 1
implicit Euler, theta = 1/2 Crank-Nicolson); the Stokes step is implicit
Euler only.
"""

from dataclasses import dataclass

import numpy as np

from .grid import (BoundaryData, Grid, ScalarField, VectorField,
                   check_same_grid, face_divergence, face_normal_values,
                   integrate, require_finite)

DEFAULT_TOL = 1e-10
MAX_CG_ITER = 50000


class SolverError(RuntimeError):
    """A linear solve failed to converge within the iteration cap."""


@dataclass
class LinearSolveReport:
    iterations: int
    final_residual: float
    solver: str


def _lap_zero_flux(grid: Grid, vals: np.ndarray) -> np.ndarray:
    """FV Laplacian with homogeneous Neumann (zero-flux) boundary faces."""
    ny, nx = grid.shape
    gx = np.zeros((ny, nx + 1))
    gx[:, 1:-1] = (vals[:, 1:] - vals[:, :-1]) / grid.hx
    gy = np.zeros((ny + 1, nx))
    gy[1:-1, :] = (vals[1:, :] - vals[:-1, :]) / grid.hy
    return face_divergence(grid, gx, gy)


def _lap_dirichlet(grid: Grid, vals: np.ndarray) -> np.ndarray:
    """FV Laplacian with homogeneous Dirichlet data at the boundary faces.

    The boundary face gradient uses the half-cell distance: (0 - v)/(h/2).
    """
    ny, nx = grid.shape
    gx = np.empty((ny, nx + 1))
    gx[:, 1:-1] = (vals[:, 1:] - vals[:, :-1]) / grid.hx
    gx[:, 0] = vals[:, 0] * (2.0 / grid.hx)
    gx[:, -1] = -vals[:, -1] * (2.0 / grid.hx)
    gy = np.empty((ny + 1, nx))
    gy[1:-1, :] = (vals[1:, :] - vals[:-1, :]) / grid.hy
    gy[0, :] = vals[0, :] * (2.0 / grid.hy)
    gy[-1, :] = -vals[-1, :] * (2.0 / grid.hy)
    return face_divergence(grid, gx, gy)


def _neg_lap_diag(grid: Grid, bc: str) -> np.ndarray:
    """Diagonal of -Laplacian for the given boundary treatment."""
    ny, nx = grid.shape
    ax = np.full(nx, 2.0)
    ay = np.full(ny, 2.0)
    if bc == "neumann0":
        ax[0] = ax[-1] = 1.0
        ay[0] = ay[-1] = 1.0
    elif bc == "dirichlet0":
        ax[0] = ax[-1] = 3.0
        ay[0] = ay[-1] = 3.0
    else:
        raise ValueError(f"unknown bc {bc!r}")
    return ax[None, :] / grid.hx ** 2 + ay[:, None] / grid.hy ** 2


def solve_cg(apply_op, rhs: np.ndarray, diag: np.ndarray, tol: float,
             x0: np.ndarray | None = None, max_iter: int = MAX_CG_ITER,
             project_mean: bool = False, tag: str = "cg"
             ) -> tuple[np.ndarray, LinearSolveReport]:
    """Preconditioned conjugate gradient, matrix-free.

    Stops when ||r||_2 <= tol * ||rhs||_2.  With ``project_mean`` the
    constant mode is removed from the iterate and residual after every
    operator application (for the singular zero-flux operators restricted
    to mean-zero data).
    """
    bnorm = float(np.linalg.norm(rhs))
    if bnorm == 0.0:
        return np.zeros_like(rhs), LinearSolveReport(0, 0.0, tag)
    x = np.zeros_like(rhs) if x0 is None else x0.astype(float, copy=True)
    if project_mean:
        x -= x.mean()
    r = rhs - apply_op(x)
    if project_mean:
        r -= r.mean()
    target = tol * bnorm
    rnorm = float(np.linalg.norm(r))
    if rnorm <= target:
        return x, LinearSolveReport(0, rnorm / bnorm, tag)
    z = r / diag
    p = z.copy()
    rz = float((r * z).sum())
    for k in range(1, max_iter + 1):
        Ap = apply_op(p)
        if project_mean:
            Ap -= Ap.mean()
        alpha = rz / float((p * Ap).sum())
        x += alpha * p
        r -= alpha * Ap
        if project_mean:
            x -= x.mean()
            r -= r.mean()
        rnorm = float(np.linalg.norm(r))
        if rnorm <= target:
            return x, LinearSolveReport(k, rnorm / bnorm, tag)
        z = r / diag
        rz_new = float((r * z).sum())
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(f"{tag}: no convergence after {max_iter} iterations "
                      f"(residual {rnorm / bnorm:.3e}, target {tol:.3e})")


# ---------------------------------------------------------------------------
# heat steps (array-level cores plus field-level wrappers)

def _boundary_source(grid: Grid, b: BoundaryData) -> np.ndarray:
    """Cell source from prescribed boundary fluxes: b * face_len / volume."""
    src = np.zeros(grid.shape)
    src[:, 0] += b.left / grid.hx
    src[:, -1] += b.right / grid.hx
    src[0, :] += b.bottom / grid.hy
    src[-1, :] += b.top / grid.hy
    return src


def neumann_heat_core(grid: Grid, u: np.ndarray, b: BoundaryData,
                      forcing: np.ndarray, dt: float, tol: float,
                      theta: float = 1.0, x0: np.ndarray | None = None
                      ) -> tuple[np.ndarray, LinearSolveReport]:
    """One theta step of du/dt = lap(u) + forcing with boundary flux b.

    Solves (I - theta*dt*L0) u' = u + (1-theta)*dt*L0 u
                                  + dt*(forcing + boundary source).
    The prescribed flux enters once (weight 1) as boundary source data.
    """
    td = theta * dt
    rhs = u + dt * forcing + dt * _boundary_source(grid, b)
    if theta < 1.0:
        rhs = rhs + (1.0 - theta) * dt * _lap_zero_flux(grid, u)
    diag = 1.0 + td * _neg_lap_diag(grid, "neumann0")

    def apply_op(v):
        return v - td * _lap_zero_flux(grid, v)

    start = rhs if x0 is None else x0
    return solve_cg(apply_op, rhs, diag, tol, x0=start, tag="neumann-heat")


def step_neumann_heat(U: ScalarField, F_B: VectorField, F_E: ScalarField,
                      dt: float, tol: float = DEFAULT_TOL, theta: float = 1.0
                      ) -> ScalarField:
    """Implicit heat step with divergence-form forcing and inhomogeneous flux.

    Advances ``U`` by one theta step of
        du/dt = lap(u) - div(F_B) + F_E,   grad(u).nu = F_B.nu on the boundary,
    where div(F_B) and the boundary flux come from the same face-normal
    representation of F_B, so the cell mean of U is preserved exactly
    (discrete Gauss identity) whenever integrate(F_E) = 0.
    """
    g = U.grid
    check_same_grid(U, F_B, F_E)
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    require_finite(U.values, "U")
    fe_norm = float(np.sqrt((F_E.values ** 2).sum() * g.cell_volume))
    if abs(integrate(F_E)) > 1e-8 * max(fe_norm, 1e-300):
        raise ValueError("F_E violates the mean-zero precondition")
    fx, fy = face_normal_values(F_B)
    b = BoundaryData(left=-fx[:, 0], right=fx[:, -1],
                     bottom=-fy[0, :], top=fy[-1, :])
    forcing = -face_divergence(g, fx, fy) + F_E.values
    out, _ = neumann_heat_core(g, U.values, b, forcing, dt, tol, theta)
    return ScalarField(g, out)


def shifted_heat_core(grid: Grid, c: np.ndarray, rhs_src: np.ndarray,
                      dt: float, tol: float, theta: float = 1.0,
                      x0: np.ndarray | None = None
                      ) -> tuple[np.ndarray, LinearSolveReport]:
    """One theta step of dc/dt = lap(c) - c + rhs_src with zero flux."""
    td = theta * dt
    rhs = c + dt * rhs_src
    if theta < 1.0:
        rhs = rhs + (1.0 - theta) * dt * (_lap_zero_flux(grid, c) - c)
    ident = 1.0 + td
    diag = ident + td * _neg_lap_diag(grid, "neumann0")

    def apply_op(v):
        return ident * v - td * _lap_zero_flux(grid, v)

    start = rhs / ident if x0 is None else x0
    return solve_cg(apply_op, rhs, diag, tol, x0=start, tag="shifted-heat")


def step_shifted_heat(c: ScalarField, rhs: ScalarField, dt: float,
                      tol: float = DEFAULT_TOL, theta: float = 1.0
                      ) -> ScalarField:
    """Theta step of the shifted Neumann heat operator (1 - lap)."""
    check_same_grid(c, rhs)
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    require_finite(c.values, "c")
    out, _ = shifted_heat_core(c.grid, c.values, rhs.values, dt, tol, theta)
    return ScalarField(c.grid, out)


# ---------------------------------------------------------------------------
# Helmholtz projection and the Stokes step

def _project_core(grid: Grid, fx: np.ndarray, fy: np.ndarray, tol: float,
                  p0: np.ndarray | None = None
                  ) -> tuple[np.ndarray, np.ndarray, np.ndarray, LinearSolveReport]:
    """Remove the gradient part from face-normal values.

    Solves lap(p) = div(v) with grad(p).nu = v.nu (mean-zero pinning), then
    corrects the faces.  Corrected boundary faces are exactly zero.
    Returns (fx', fy', p, report).
    """
    b = BoundaryData(left=-fx[:, 0], right=fx[:, -1],
                     bottom=-fy[0, :], top=fy[-1, :])
    rhs = _boundary_source(grid, b) - face_divergence(grid, fx, fy)
    diag = _neg_lap_diag(grid, "neumann0")

    def apply_op(v):
        return -_lap_zero_flux(grid, v)

    p, report = solve_cg(apply_op, rhs, diag, tol, x0=p0,
                         project_mean=True, tag="pressure-poisson")
    ny, nx = grid.shape
    gpx = np.empty((ny, nx + 1))
    gpx[:, 1:-1] = (p[:, 1:] - p[:, :-1]) / grid.hx
    gpx[:, 0] = fx[:, 0]          # prescribed grad(p).nu = v.nu
    gpx[:, -1] = fx[:, -1]
    gpy = np.empty((ny + 1, nx))
    gpy[1:-1, :] = (p[1:, :] - p[:-1, :]) / grid.hy
    gpy[0, :] = fy[0, :]
    gpy[-1, :] = fy[-1, :]
    fx_new = fx - gpx
    fy_new = fy - gpy
    fx_new[:, 0] = 0.0
    fx_new[:, -1] = 0.0
    fy_new[0, :] = 0.0
    fy_new[-1, :] = 0.0
    return fx_new, fy_new, p, report


def _cells_from_face_gradient(grid: Grid, gpx: np.ndarray, gpy: np.ndarray
                              ) -> tuple[np.ndarray, np.ndarray]:
    cx = 0.5 * (gpx[:, 1:] + gpx[:, :-1])
    cy = 0.5 * (gpy[1:, :] + gpy[:-1, :])
    return cx, cy


def helmholtz_project_core(v: VectorField, tol: float,
                           boundary: str = "extrapolate",
                           p0: np.ndarray | None = None
                           ) -> tuple[VectorField, np.ndarray, LinearSolveReport]:
    g = v.grid
    fx, fy = face_normal_values(v, boundary=boundary)
    fx_new, fy_new, p, report = _project_core(g, fx, fy, tol, p0=p0)
    # cell-centered correction from the same compact face gradients
    gpx = fx - fx_new
    gpy = fy - fy_new
    cx, cy = _cells_from_face_gradient(g, gpx, gpy)
    out = VectorField(g, v.ux - cx, v.uy - cy, fx_new, fy_new)
    return out, p, report


def helmholtz_project(v: VectorField, tol: float = DEFAULT_TOL) -> VectorField:
    """Project onto discretely divergence-free fields with zero normal trace.

    Returns v - grad(p) where p solves the pressure Poisson problem
    lap(p) = div(v), grad(p).nu = v.nu, normalized to mean zero.  The
    result carries face-normal values whose finite-volume divergence is
    below the solve tolerance and whose boundary values vanish exactly.
    """
    require_finite(v.ux, "ux")
    require_finite(v.uy, "uy")
    out, _, _ = helmholtz_project_core(v, tol)
    return out


def stokes_core(grid: Grid, ux: np.ndarray, uy: np.ndarray,
                force_x: np.ndarray, force_y: np.ndarray, dt: float,
                tol: float, p0: np.ndarray | None = None
                ) -> tuple[VectorField, np.ndarray, int]:
    """Chorin split Stokes step on raw arrays; returns (u', p, cg iterations)."""
    diag = 1.0 + dt * _neg_lap_diag(grid, "dirichlet0")

    def apply_op(v):
        return v - dt * _lap_dirichlet(grid, v)

    rhs_x = ux + dt * force_x
    rhs_y = uy + dt * force_y
    sx, rep_x = solve_cg(apply_op, rhs_x, diag, tol, x0=rhs_x, tag="stokes-heat-x")
    sy, rep_y = solve_cg(apply_op, rhs_y, diag, tol, x0=rhs_y, tag="stokes-heat-y")
    star = VectorField(grid, sx, sy)
    out, p, rep_p = helmholtz_project_core(star, tol, boundary="zero", p0=p0)
    return out, p, rep_x.iterations + rep_y.iterations + rep_p.iterations


def step_stokes(u: VectorField, force: VectorField, dt: float,
                tol: float = DEFAULT_TOL) -> VectorField:
    """Implicit Euler Stokes step: no-slip viscous solve, then projection.

    (I - dt*lap) u* = u + dt*force with u* = 0 on the boundary, followed by
    the Helmholtz projection.  The result is discretely divergence-free to
    the solve tolerance and has zero normal boundary flux.
    """
    check_same_grid(u, force)
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    require_finite(u.ux, "ux")
    require_finite(u.uy, "uy")
    out, _, _ = stokes_core(u.grid, u.ux, u.uy, force.ux, force.uy, dt, tol)
    return out
