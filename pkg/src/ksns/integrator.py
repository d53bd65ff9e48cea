"""Coupled chemotaxis-fluid integrator.

One IMEX step treats diffusion and the (1 - laplacian) shift implicitly and
freezes the chemotactic flux, the advective transport, and the buoyancy
forcing at the current iterate; an optional per-step Picard loop re-solves
with coefficients frozen at the previous iterate until the combined field
change stalls.  The three substeps run in the order density -> signal ->
velocity, with the velocity forcing consuming the freshly solved density.

The loop integrates the shifted variables: the density deviation from its
initial mean and the signal minus a scheme-consistent multiple of that
mean.  The multiple follows the same theta recursion as the constant mode
of the signal equation, so the discrete mass recursion of the unshifted
signal holds to solver tolerance, and the boundary flux of the density
solve is byte-for-byte the chemotactic face flux, which conserves total
cell mass exactly up to linear-solver tolerance.
"""

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .grid import (BoundaryData, Grid, ScalarField, VectorField,
                   check_same_grid, ddx, ddy, extrapolate_to_faces,
                   face_divergence, face_normal_values, integrate,
                   require_finite)
from .linstep import (DEFAULT_TOL, neumann_heat_core, shifted_heat_core,
                      stokes_core)


class BlowUpError(RuntimeError):
    """The run produced non-finite values or exceeded the sup ceiling.

    Carries the last valid state (``state``) and, when raised from ``run``,
    the diagnostics recorded up to the abort (``series``).
    """

    def __init__(self, message, state=None, series=None):
        super().__init__(message)
        self.state = state
        self.series = series


# ---------------------------------------------------------------------------
# sensitivity tensor

@dataclass
class SensitivitySpec:
    """2x2 sensitivity tensor S(t, x) with its time derivative.

    ``entries(t, X, Y)`` returns the four entries (s11, s12, s21, s22),
    each broadcastable to the shape of X.  ``entries_dt`` is the time
    derivative (defaults to zero).
    """

    tag: str
    entries: Callable
    entries_dt: Callable | None = None

    def evaluate(self, t: float, X: np.ndarray, Y: np.ndarray):
        out = []
        for s in self.entries(t, X, Y):
            arr = np.broadcast_to(np.asarray(s, dtype=float), X.shape)
            require_finite(arr, f"sensitivity tensor ({self.tag})")
            out.append(arr)
        return tuple(out)

    def evaluate_dt(self, t: float, X: np.ndarray, Y: np.ndarray):
        if self.entries_dt is None:
            z = np.zeros(X.shape)
            return (z, z, z, z)
        return tuple(np.broadcast_to(np.asarray(s, dtype=float), X.shape)
                     for s in self.entries_dt(t, X, Y))

    @classmethod
    def identity(cls) -> "SensitivitySpec":
        return cls("identity", lambda t, X, Y: (1.0, 0.0, 0.0, 1.0))

    @classmethod
    def scaled(cls, a: float) -> "SensitivitySpec":
        a = float(a)
        return cls(f"scaled({a:g})", lambda t, X, Y: (a, 0.0, 0.0, a))

    @classmethod
    def rotation(cls, a: float, b: float) -> "SensitivitySpec":
        """S = a*I + b*J with J the 90-degree rotation [[0, -1], [1, 0]]."""
        a, b = float(a), float(b)
        return cls(f"rotation({a:g},{b:g})",
                   lambda t, X, Y: (a, -b, b, a))


# ---------------------------------------------------------------------------
# state and given data

@dataclass
class SimState:
    """Unshifted state (t, n, c, u) plus the cached initial density mean.

    ``bc_flux_diffusive`` / ``bc_flux_chemotactic`` record the boundary
    face fluxes the last step actually used for the density diffusion and
    the chemotactic transport; by construction of the scheme they are
    identical arrays.
    """

    t: float
    n: ScalarField
    c: ScalarField
    u: VectorField
    n_bar0: float
    bc_flux_diffusive: BoundaryData | None = None
    bc_flux_chemotactic: BoundaryData | None = None


@dataclass
class GivenData:
    """Initial fields and given functions for a run."""

    n0: ScalarField
    c0: ScalarField
    u0: VectorField
    phi_grad: VectorField
    S: SensitivitySpec
    f: Callable[[float], VectorField] | None = None

    @property
    def grid(self) -> Grid:
        return self.n0.grid

    def validate(self) -> None:
        """Check the hypotheses on the data at discretization accuracy:
        zero normal signal gradient, divergence-free no-slip velocity."""
        g = self.grid
        check_same_grid(self.n0, self.c0, self.u0, self.phi_grad)
        require_finite(self.n0.values, "n0")
        require_finite(self.c0.values, "c0")
        scale_c = 1.0 + float(np.abs(self.c0.values).max())
        tol_c = 50.0 * max(g.hx, g.hy) ** 2 * scale_c
        bnd = boundary_normal_derivative_raw(g, self.c0.values)
        if bnd.max_abs() > tol_c:
            raise ValueError(
                f"c0 violates the zero-flux condition: max |grad(c0).nu| = "
                f"{bnd.max_abs():.3e} > {tol_c:.3e}")
        fx, fy = face_normal_values(self.u0)
        scale_u = 1.0 + max(np.abs(fx).max(), np.abs(fy).max())
        tol_u = 50.0 * max(g.hx, g.hy) ** 2 * scale_u
        trace = max(np.abs(fx[:, 0]).max(), np.abs(fx[:, -1]).max(),
                    np.abs(fy[0, :]).max(), np.abs(fy[-1, :]).max())
        if trace > tol_u:
            raise ValueError(f"u0 has nonzero normal boundary trace {trace:.3e}")
        div = face_divergence(g, fx, fy)
        div_norm = float(np.sqrt((div ** 2).sum() * g.cell_volume))
        if div_norm > 100.0 * max(g.hx, g.hy) * scale_u:
            raise ValueError(f"u0 is not divergence-free: |div u0|_L2 = {div_norm:.3e}")

    def initial_state(self) -> SimState:
        n_bar0 = integrate(self.n0) / self.grid.volume
        return SimState(t=0.0, n=self.n0.copy(), c=self.c0.copy(),
                        u=self.u0.copy(), n_bar0=n_bar0)


def make_initial_state(data: GivenData) -> SimState:
    return data.initial_state()


# ---------------------------------------------------------------------------
# shift transform

def shift_transform(state: SimState) -> SimState:
    """Shifted state: density minus its initial mean, signal minus the
    relaxation profile (1 - e^{-t}) times that mean."""
    gamma = 1.0 - math.exp(-state.t)
    n = ScalarField(state.n.grid, state.n.values - state.n_bar0)
    c = ScalarField(state.c.grid, state.c.values - gamma * state.n_bar0)
    return replace(state, n=n, c=c)


def unshift(shifted: SimState, t: float) -> SimState:
    """Inverse of ``shift_transform`` at time ``t``."""
    gamma = 1.0 - math.exp(-t)
    n = ScalarField(shifted.n.grid, shifted.n.values + shifted.n_bar0)
    c = ScalarField(shifted.c.grid, shifted.c.values + gamma * shifted.n_bar0)
    return replace(shifted, t=t, n=n, c=c)


# ---------------------------------------------------------------------------
# chemotactic flux

def boundary_normal_derivative_raw(grid: Grid, vals: np.ndarray) -> BoundaryData:
    """One-sided second-order outward normal derivative at boundary faces."""
    hx, hy = grid.hx, grid.hy
    left = (2.0 * vals[:, 0] - 3.0 * vals[:, 1] + vals[:, 2]) / hx
    right = (2.0 * vals[:, -1] - 3.0 * vals[:, -2] + vals[:, -3]) / hx
    bottom = (2.0 * vals[0, :] - 3.0 * vals[1, :] + vals[2, :]) / hy
    top = (2.0 * vals[-1, :] - 3.0 * vals[-2, :] + vals[-3, :]) / hy
    return BoundaryData(left=left, right=right, bottom=bottom, top=top)


def boundary_normal_derivative(f: ScalarField) -> BoundaryData:
    return boundary_normal_derivative_raw(f.grid, f.values)


def _face_derivative_x(grid: Grid, vals: np.ndarray) -> np.ndarray:
    """d/dx at the vertical faces: compact interior, one-sided at x=0, Lx."""
    ny, nx = grid.shape
    hx = grid.hx
    out = np.empty((ny, nx + 1))
    out[:, 1:-1] = (vals[:, 1:] - vals[:, :-1]) / hx
    out[:, 0] = (-2.0 * vals[:, 0] + 3.0 * vals[:, 1] - vals[:, 2]) / hx
    out[:, -1] = (2.0 * vals[:, -1] - 3.0 * vals[:, -2] + vals[:, -3]) / hx
    return out


def _face_derivative_y(grid: Grid, vals: np.ndarray) -> np.ndarray:
    ny, nx = grid.shape
    hy = grid.hy
    out = np.empty((ny + 1, nx))
    out[1:-1, :] = (vals[1:, :] - vals[:-1, :]) / hy
    out[0, :] = (-2.0 * vals[0, :] + 3.0 * vals[1, :] - vals[2, :]) / hy
    out[-1, :] = (2.0 * vals[-1, :] - 3.0 * vals[-2, :] + vals[-3, :]) / hy
    return out


def chemotactic_flux_raw(grid: Grid, n_vals: np.ndarray, c_vals: np.ndarray,
                         S: SensitivitySpec, t: float) -> VectorField:
    dcx = ddx(c_vals, grid.hx)
    dcy = ddy(c_vals, grid.hy)
    X, Y = grid.cell_centers()
    s11, s12, s21, s22 = S.evaluate(t, X, Y)
    qx = n_vals * (s11 * dcx + s12 * dcy)
    qy = n_vals * (s21 * dcx + s22 * dcy)

    n_fx, n_fy = extrapolate_to_faces(n_vals)
    # vertical faces: normal derivative compact/one-sided, tangential part
    # extrapolated from the cell-centered gradient
    dcx_fx = _face_derivative_x(grid, c_vals)
    dcy_fx = extrapolate_to_faces(dcy)[0]
    xf = np.arange(grid.nx + 1) * grid.hx
    Xf, Yf = np.meshgrid(xf, grid.yc)
    s11f, s12f, _, _ = S.evaluate(t, Xf, Yf)
    fx = n_fx * (s11f * dcx_fx + s12f * dcy_fx)

    dcy_fy = _face_derivative_y(grid, c_vals)
    dcx_fy = extrapolate_to_faces(dcx)[1]
    yf = np.arange(grid.ny + 1) * grid.hy
    Xg, Yg = np.meshgrid(grid.xc, yf)
    _, _, s21f, s22f = S.evaluate(t, Xg, Yg)
    fy = n_fy * (s21f * dcx_fy + s22f * dcy_fy)
    return VectorField(grid, qx, qy, fx, fy)


def chemotactic_flux(n: ScalarField, c: ScalarField, S: SensitivitySpec,
                     t: float = 0.0) -> VectorField:
    """Cell-centered chemotactic flux n * (S grad c) with face-normal values.

    The boundary face values (one-sided signal gradient, face-interpolated
    density) are exactly the fluxes the density equation imposes as its
    boundary condition, so the flux balance there holds identically.
    """
    check_same_grid(n, c)
    require_finite(n.values, "n")
    require_finite(c.values, "c")
    return chemotactic_flux_raw(n.grid, n.values, c.values, S, t)


def upwind_divergence(grid: Grid, phi: np.ndarray, ufx: np.ndarray,
                      ufy: np.ndarray) -> np.ndarray:
    """Conservative first-order upwind divergence of (u * phi).

    Boundary faces carry zero advective flux (impermeable walls)."""
    ny, nx = grid.shape
    Fx = np.zeros((ny, nx + 1))
    ui = ufx[:, 1:-1]
    Fx[:, 1:-1] = ui * np.where(ui > 0.0, phi[:, :-1], phi[:, 1:])
    Fy = np.zeros((ny + 1, nx))
    vi = ufy[1:-1, :]
    Fy[1:-1, :] = vi * np.where(vi > 0.0, phi[:-1, :], phi[1:, :])
    return face_divergence(grid, Fx, Fy)


# ---------------------------------------------------------------------------
# the IMEX step

@dataclass
class RunOptions:
    theta: float = 1.0
    cg_tol: float = DEFAULT_TOL
    projection_tol: float = DEFAULT_TOL
    picard_enabled: bool = False
    picard_k_max: int = 1
    picard_tol: float = 1e-10
    snapshot_stride: int = 1
    blowup_ceiling: float = 1e6


@dataclass
class _ShiftedFields:
    """Internal loop state: t, density deviation, shifted signal, velocity,
    and the scheme-consistent constant-mode factor gamma."""

    t: float
    nt: np.ndarray
    chi: np.ndarray
    u: VectorField
    gamma: float


@dataclass
class _StepInfo:
    bc_diffusive: BoundaryData
    bc_chemotactic: BoundaryData


def _gamma_update(gamma: float, dt: float, theta: float) -> float:
    return (gamma * (1.0 - (1.0 - theta) * dt) + dt) / (1.0 + theta * dt)


def _advance(grid: Grid, sf: _ShiftedFields, data: GivenData, n_bar0: float,
             dt: float, opts: RunOptions, frozen: _ShiftedFields | None = None,
             pressure: list | None = None) -> tuple[_ShiftedFields, _StepInfo]:
    """One IMEX step of the shifted system.

    Nonlinear coefficients are evaluated at ``frozen`` (defaults to the
    current state, which gives the plain step); the implicit solves always
    start from ``sf``.
    """
    w = sf if frozen is None else frozen
    t0 = sf.t
    theta = opts.theta

    chem = chemotactic_flux_raw(grid, w.nt + n_bar0, w.chi, data.S, t0)
    bc = BoundaryData(left=-chem.fx[:, 0], right=chem.fx[:, -1],
                      bottom=-chem.fy[0, :], top=chem.fy[-1, :])
    ufx, ufy = face_normal_values(w.u, boundary="zero")

    forcing_n = -face_divergence(grid, chem.fx, chem.fy) \
        - upwind_divergence(grid, w.nt, ufx, ufy)
    nt_new, _ = neumann_heat_core(grid, sf.nt, bc, forcing_n, dt,
                                  opts.cg_tol, theta, x0=sf.nt)

    rhs_c = w.nt - upwind_divergence(grid, w.chi, ufx, ufy)
    chi_new, _ = shifted_heat_core(grid, sf.chi, rhs_c, dt, opts.cg_tol, theta)

    if data.f is not None:
        fvec = data.f(t0)
        f_x, f_y = fvec.ux, fvec.uy
    else:
        f_x = f_y = 0.0
    force_x = -upwind_divergence(grid, w.u.ux, ufx, ufy) \
        + nt_new * data.phi_grad.ux + f_x
    force_y = -upwind_divergence(grid, w.u.uy, ufx, ufy) \
        + nt_new * data.phi_grad.uy + f_y
    p0 = pressure[0] if pressure else None
    u_new, p, _ = stokes_core(grid, sf.u.ux, sf.u.uy, force_x, force_y, dt,
                              opts.cg_tol, p0=p0)
    if pressure is not None:
        pressure[0] = p

    gamma_new = _gamma_update(sf.gamma, dt, theta)
    new = _ShiftedFields(t=t0 + dt, nt=nt_new, chi=chi_new, u=u_new,
                         gamma=gamma_new)
    _check_blowup(new, n_bar0, opts.blowup_ceiling, sf)
    return new, _StepInfo(bc_diffusive=bc.copy(), bc_chemotactic=bc.copy())


def _check_blowup(sf: _ShiftedFields, n_bar0: float, ceiling: float,
                  last_valid: _ShiftedFields) -> None:
    arrays = (sf.nt, sf.chi, sf.u.ux, sf.u.uy)
    finite = all(np.isfinite(a).all() for a in arrays)
    sup = max(np.abs(sf.nt).max() + abs(n_bar0),
              np.abs(sf.chi).max() + abs(n_bar0),
              np.abs(sf.u.ux).max(), np.abs(sf.u.uy).max()) if finite else np.inf
    if not finite or sup > ceiling:
        raise BlowUpError(
            f"blow-up detected at t = {sf.t:.6g}: "
            + ("non-finite values" if not finite else f"sup {sup:.3e} exceeds ceiling {ceiling:.3e}"),
            state=_to_state(last_valid, n_bar0))


def _from_state(state: SimState) -> _ShiftedFields:
    gamma = 1.0 - math.exp(-state.t)
    u = state.u
    if u.fx is None or u.fy is None:
        fx, fy = face_normal_values(u, boundary="zero")
        u = VectorField(u.grid, u.ux.copy(), u.uy.copy(), fx, fy)
    return _ShiftedFields(t=state.t, nt=state.n.values - state.n_bar0,
                          chi=state.c.values - gamma * state.n_bar0,
                          u=u, gamma=gamma)


def _to_state(sf: _ShiftedFields, n_bar0: float,
              info: _StepInfo | None = None) -> SimState:
    g = sf.u.grid
    n = ScalarField(g, sf.nt + n_bar0)
    c = ScalarField(g, sf.chi + sf.gamma * n_bar0)
    state = SimState(t=sf.t, n=n, c=c, u=sf.u.copy(), n_bar0=n_bar0)
    if info is not None:
        state.bc_flux_diffusive = info.bc_diffusive
        state.bc_flux_chemotactic = info.bc_chemotactic
    return state


def step(state: SimState, data: GivenData, dt: float,
         options: RunOptions | None = None) -> SimState:
    """Advance one IMEX step with coefficients frozen at the current state."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    opts = options or RunOptions()
    grid = data.grid
    sf = _from_state(state)
    new, info = _advance(grid, sf, data, state.n_bar0, dt, opts)
    return _to_state(new, state.n_bar0, info)


def _rel_increment(a: _ShiftedFields, b: _ShiftedFields, n_bar0: float) -> float:
    """Sup over the unshifted fields (n, c, u) of the relative L2 change.

    Works on reconstructed fields so that a state that is an exact fixed
    point of the dynamics reports a zero increment even though its shifted
    representation evolves."""
    def rel(x, y):
        num = float(np.sqrt(((x - y) ** 2).sum()))
        if num == 0.0:
            return 0.0
        return num / max(float(np.sqrt((y ** 2).sum())), 1e-300)

    n_a = a.nt + n_bar0
    n_b = b.nt + n_bar0
    c_a = a.chi + a.gamma * n_bar0
    c_b = b.chi + b.gamma * n_bar0
    du = float(np.sqrt(((a.u.ux - b.u.ux) ** 2 + (a.u.uy - b.u.uy) ** 2).sum()))
    base_u = max(float(np.sqrt((b.u.ux ** 2 + b.u.uy ** 2).sum())), 1e-300)
    u_inc = 0.0 if du == 0.0 else du / base_u
    return max(rel(n_a, n_b), rel(c_a, c_b), u_inc)


def picard_step(state: SimState, data: GivenData, dt: float,
                k_max: int = 4, tol: float = 1e-10,
                options: RunOptions | None = None
                ) -> tuple[SimState, int, float]:
    """Iterate the step map with coefficients frozen at the previous iterate.

    Returns (new state, iterations used, contraction estimate).  The
    contraction estimate is the ratio of the last two increments (0 when
    fewer than two were taken); values >= 1 are reported, not raised.
    """
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    opts = options or RunOptions()
    grid = data.grid
    sf = _from_state(state)
    iterate = sf
    prev_inc = None
    contraction = 0.0
    info = None
    for m in range(1, k_max + 1):
        new, info = _advance(grid, sf, data, state.n_bar0, dt, opts,
                             frozen=iterate)
        inc = _rel_increment(new, iterate, state.n_bar0)  # iterate starts at the seed
        if prev_inc is not None and prev_inc > 0.0:
            contraction = inc / prev_inc
        iterate = new
        if inc < tol:
            return _to_state(iterate, state.n_bar0, info), m, contraction
        prev_inc = inc
    return _to_state(iterate, state.n_bar0, info), k_max, contraction


# ---------------------------------------------------------------------------
# the time loop

def run(data: GivenData, T: float, dt: float,
        options: RunOptions | None = None):
    """Advance to time T, recording diagnostics each step.

    Returns (trajectory, series): SimState snapshots at the configured
    stride (always including the initial and final states) and the
    per-step diagnostics.  A blow-up aborts with the last valid state and
    the partial series attached to the raised ``BlowUpError``.
    """
    from .diagnostics import DiagnosticsSeries

    opts = options or RunOptions()
    if T <= 0.0:
        raise ValueError("T must be positive")
    if dt <= 0.0 or dt > T:
        raise ValueError("dt must satisfy 0 < dt <= T")
    if opts.theta not in (1.0, 0.5):
        raise ValueError("theta must be 1 or 0.5")
    data.validate()
    grid = data.grid
    n_steps = max(1, round(T / dt))

    state0 = data.initial_state()
    n_bar0 = state0.n_bar0
    sf = _from_state(state0)
    series = DiagnosticsSeries()
    trajectory = [state0]
    pressure = [None]
    vol = grid.cell_volume
    omega = grid.volume

    for k in range(1, n_steps + 1):
        try:
            if opts.picard_enabled:
                iterate = sf
                prev_inc = None
                contraction = 0.0
                iters = opts.picard_k_max
                for m in range(1, opts.picard_k_max + 1):
                    new, info = _advance(grid, sf, data, n_bar0, dt, opts,
                                         frozen=iterate, pressure=pressure)
                    inc = _rel_increment(new, iterate, n_bar0)
                    if prev_inc is not None and prev_inc > 0.0:
                        contraction = inc / prev_inc
                    iterate = new
                    if inc < opts.picard_tol:
                        iters = m
                        break
                    prev_inc = inc
                sf = iterate
            else:
                sf, info = _advance(grid, sf, data, n_bar0, dt, opts,
                                    pressure=pressure)
                iters, contraction = 1, 0.0
        except BlowUpError as exc:
            exc.series = series
            raise
        sf.t = k * dt       # avoid accumulated addition drift
        n_vals = sf.nt + n_bar0
        c_vals = sf.chi + sf.gamma * n_bar0
        bc_res = max(float(np.abs(getattr(info.bc_diffusive, s)
                                  - getattr(info.bc_chemotactic, s)).max())
                     for s in ("left", "right", "bottom", "top"))
        series.append(
            t=sf.t,
            mass_n=n_bar0 * omega + float(sf.nt.sum()) * vol,
            mass_c=float(sf.chi.sum()) * vol + sf.gamma * n_bar0 * omega,
            sup_n_dev=float(np.abs(sf.nt).max()),
            sup_c_dev=float(np.abs(sf.chi + (sf.gamma - (1.0 - math.exp(-sf.t)))
                                   * n_bar0).max()),
            sup_u=float(np.sqrt(sf.u.ux ** 2 + sf.u.uy ** 2).max()),
            min_n=float(n_vals.min()),
            min_c=float(c_vals.min()),
            bc_residual=bc_res,
            neg_energy_n=float((np.minimum(n_vals, 0.0) ** 2).sum()) * vol,
            neg_energy_c=float((np.minimum(c_vals, 0.0) ** 2).sum()) * vol,
            picard_iters=iters,
            contraction=contraction,
        )
        if k % opts.snapshot_stride == 0 or k == n_steps:
            trajectory.append(_to_state(sf, n_bar0, info))
    return trajectory, series
