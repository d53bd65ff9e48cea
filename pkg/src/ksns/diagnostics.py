"""Quantitative verdicts on runs: mass identities, decay-rate fits,
smallness and weighted solution norms (discrete Sobolev proxies),
non-negativity monitors, and boundary/compatibility residuals.

The smoothness-graded norms here are integer-order difference-quotient
proxies for the interpolation-space norms the analysis works with; they
preserve the homogeneity and ordering that the checks rely on, and are
declared as proxies in the README.
"""

import math
from dataclasses import dataclass

import numpy as np

from .grid import ScalarField, VectorField, discrete_norm
from .integrator import (GivenData, SensitivitySpec, SimState,
                         boundary_normal_derivative_raw, chemotactic_flux_raw)

SERIES_COLUMNS = (
    "t", "mass_n", "mass_c", "sup_n_dev", "sup_c_dev", "sup_u",
    "min_n", "min_c", "bc_residual", "neg_energy_n", "neg_energy_c",
    "picard_iters", "contraction",
)


@dataclass
class DiagnosticsConfig:
    """Exponents and decay rates used by the weighted norms.

    ``r`` and ``q`` must exceed 2 and stay off the critical line
    1/r + 2/q = 1; the rate windows against the computed Poincare
    constants are checked by ``validate_rates`` once a grid is known.
    """

    r: float = 4.0
    q: float = 4.0
    lambda1: float = 0.5
    lambda2: float = 0.25

    def __post_init__(self):
        if not self.r > 2.0:
            raise ValueError(f"r must exceed 2 (the space dimension), got {self.r}")
        if not self.q > 2.0:
            raise ValueError(f"q must exceed 2, got {self.q}")
        if abs(1.0 / self.r + 2.0 / self.q - 1.0) < 1e-12:
            raise ValueError("1/r + 2/q = 1 is the excluded critical line")
        if not 0.0 < self.lambda1 <= 1.0:
            raise ValueError(f"lambda1 must lie in (0, 1], got {self.lambda1}")
        if not 0.0 <= self.lambda2 <= self.lambda1:
            raise ValueError("lambda2 must lie in [0, lambda1]")

    def validate_rates(self, lambda_N: float, lambda_D: float) -> None:
        hi1 = min(1.0, lambda_N / self.q)
        if not self.lambda1 < hi1:
            raise ValueError(
                f"lambda1 = {self.lambda1} is not below min(1, lambda_N/q) = {hi1:.6g}")
        if not self.lambda2 < lambda_D / self.q:
            raise ValueError(
                f"lambda2 = {self.lambda2} is not below lambda_D/q = "
                f"{lambda_D / self.q:.6g}")


class DiagnosticsSeries:
    """Per-step record of masses, deviations, minima, and residuals."""

    def __init__(self):
        self._data = {name: [] for name in SERIES_COLUMNS}

    def append(self, **row) -> None:
        if set(row) != set(SERIES_COLUMNS):
            missing = set(SERIES_COLUMNS) - set(row)
            extra = set(row) - set(SERIES_COLUMNS)
            raise ValueError(f"bad diagnostics row (missing {missing}, extra {extra})")
        if self._data["t"] and row["t"] <= self._data["t"][-1]:
            raise ValueError("diagnostics times must be strictly increasing")
        for name in SERIES_COLUMNS:
            self._data[name].append(row[name])

    def __len__(self) -> int:
        return len(self._data["t"])

    def column(self, name: str) -> np.ndarray:
        return np.asarray(self._data[name], dtype=float)

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(SERIES_COLUMNS) + "\n")
            for i in range(len(self)):
                cells = []
                for name in SERIES_COLUMNS:
                    v = self._data[name][i]
                    cells.append(str(int(v)) if name == "picard_iters"
                                 else f"{v:.15g}")
                fh.write(",".join(cells) + "\n")

    @classmethod
    def from_csv(cls, path) -> "DiagnosticsSeries":
        series = cls()
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
            if tuple(header) != SERIES_COLUMNS:
                raise ValueError(f"unexpected diagnostics header in {path}")
            for line in fh:
                vals = line.strip().split(",")
                row = {name: (int(v) if name == "picard_iters" else float(v))
                       for name, v in zip(SERIES_COLUMNS, vals)}
                series.append(**row)
        return series


# ---------------------------------------------------------------------------
# mass identities

def mass_identity_residuals(series: DiagnosticsSeries, M_n0: float,
                            M_c0: float) -> tuple[float, float]:
    """Sup over recorded times of the two mass residuals.

    The density mass should equal its initial value exactly; the signal
    mass should follow e^{-t} M_c0 + (1 - e^{-t}) M_n0.
    """
    if len(series) == 0:
        raise ValueError("empty diagnostics series")
    t = series.column("t")
    rn = np.abs(series.column("mass_n") - M_n0).max()
    expected = np.exp(-t) * M_c0 + (1.0 - np.exp(-t)) * M_n0
    rc = np.abs(series.column("mass_c") - expected).max()
    return float(rn), float(rc)


# ---------------------------------------------------------------------------
# decay-rate fitting

@dataclass
class DecayFit:
    rate: float
    amplitude: float
    residual: float
    window: tuple[float, float]
    truncated: bool = False


def fit_decay_rate(samples, window: tuple[float, float]) -> DecayFit:
    """Least squares on log(value) = log(amplitude) - rate * t.

    ``samples`` is a sequence of (t, value) pairs; only those inside the
    window are used.  Non-positive values (decayed to the rounding floor)
    truncate the window at the first offender, flagged in the result.
    """
    t_a, t_b = window
    pts = [(float(t), float(v)) for t, v in samples if t_a <= t <= t_b]
    pts.sort(key=lambda p: p[0])
    truncated = False
    kept = []
    for t, v in pts:
        if v <= 0.0:
            truncated = True
            break
        kept.append((t, v))
    if len(kept) < 5:
        raise ValueError(f"need at least 5 positive samples in the window, "
                         f"got {len(kept)}")
    t = np.array([p[0] for p in kept])
    logv = np.log([p[1] for p in kept])
    slope, intercept = np.polyfit(t, logv, 1)
    resid = float(np.sqrt(np.mean((logv - (slope * t + intercept)) ** 2)))
    return DecayFit(rate=float(-slope), amplitude=float(np.exp(intercept)),
                    residual=resid, window=(t[0], t[-1]), truncated=truncated)


# ---------------------------------------------------------------------------
# weighted norms (discrete proxies)

def _vector_wkr(v: VectorField, kind: str, r: float) -> float:
    g = v.grid
    nx = discrete_norm(ScalarField(g, v.ux), kind, r)
    ny = discrete_norm(ScalarField(g, v.uy), kind, r)
    return (nx ** r + ny ** r) ** (1.0 / r)


def smallness_functional(data: GivenData, cfg: DiagnosticsConfig,
                         T_quad: float, dt_quad: float | None = None) -> float:
    """Scalar size of the given data.

    Sums the order-2 proxy norm of n0, the order-3 proxy norm of c0, the
    order-2 proxy norm of u0, and the weighted time-L^q quadrature of the
    forcing (left-endpoint Riemann sum on [0, T_quad]).
    """
    r, q = cfg.r, cfg.q
    total = discrete_norm(data.n0, "W2r", r)
    total += discrete_norm(data.c0, "W3r", r)
    total += _vector_wkr(data.u0, "W2r", r)
    if data.f is not None:
        if T_quad <= 0.0:
            raise ValueError("T_quad must be positive when forcing is present")
        h = dt_quad if dt_quad is not None else T_quad / 256.0
        n_steps = max(1, round(T_quad / h))
        acc = 0.0
        for k in range(n_steps):
            t = k * h
            fv = data.f(t)
            val = math.exp(cfg.lambda2 * t) * _vector_wkr(fv, "Lr", r)
            acc += val ** q * h
        total += acc ** (1.0 / q)
    return total


def _shifted_parts(state: SimState):
    gamma = 1.0 - math.exp(-state.t)
    g = state.n.grid
    nt = ScalarField(g, state.n.values - state.n_bar0)
    ct = ScalarField(g, state.c.values - gamma * state.n_bar0)
    return nt, ct, state.u


def weighted_solution_norm(traj, cfg: DiagnosticsConfig) -> float:
    """Discrete proxy of the weighted space-time solution norm.

    Time-L^q sums (left endpoints) of e^{lambda1 t} times the order-2
    proxy of the shifted density and the order-3 proxy of the shifted
    signal, e^{lambda2 t} times the order-2 proxy of the velocity, plus
    backward-difference-in-time terms for the first-order-in-time parts.
    A lone snapshot contributes with unit time weight and no derivative
    terms.
    """
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    r, q = cfg.r, cfg.q
    shifted = [_shifted_parts(s) for s in traj]
    times = [s.t for s in traj]

    def field_terms(k):
        nt, ct, u = shifted[k]
        w1 = math.exp(cfg.lambda1 * times[k])
        w2 = math.exp(cfg.lambda2 * times[k])
        return (w1 * discrete_norm(nt, "W2r", r),
                w1 * discrete_norm(ct, "W3r", r),
                w2 * _vector_wkr(u, "W2r", r))

    if len(traj) == 1:
        a, b, c = field_terms(0)
        return a + b + c

    acc = [0.0, 0.0, 0.0]   # field parts: n, c, u
    accd = [0.0, 0.0, 0.0]  # time-derivative parts
    g = traj[0].n.grid
    for k in range(1, len(traj)):
        dt_k = times[k] - times[k - 1]
        if dt_k <= 0.0:
            raise ValueError("trajectory times must be strictly increasing")
        a, b, c = field_terms(k - 1)
        acc[0] += a ** q * dt_k
        acc[1] += b ** q * dt_k
        acc[2] += c ** q * dt_k
        nt0, ct0, u0 = shifted[k - 1]
        nt1, ct1, u1 = shifted[k]
        w1 = math.exp(cfg.lambda1 * times[k])
        w2 = math.exp(cfg.lambda2 * times[k])
        dn = ScalarField(g, (nt1.values - nt0.values) / dt_k)
        dc = ScalarField(g, (ct1.values - ct0.values) / dt_k)
        du = VectorField(g, (u1.ux - u0.ux) / dt_k, (u1.uy - u0.uy) / dt_k)
        accd[0] += (w1 * discrete_norm(dn, "Lr", r)) ** q * dt_k
        accd[1] += (w1 * discrete_norm(dc, "W1r", r)) ** q * dt_k
        accd[2] += (w2 * _vector_wkr(du, "Lr", r)) ** q * dt_k
    return sum(v ** (1.0 / q) for v in acc) + sum(v ** (1.0 / q) for v in accd)


# ---------------------------------------------------------------------------
# non-negativity

@dataclass
class NegativityReport:
    min_n: float
    min_c: float
    max_neg_energy_n: float
    max_neg_energy_c: float


def negative_part_energy(f: ScalarField) -> float:
    """Integral of the squared negative part; zero iff the field is >= 0."""
    neg = np.minimum(f.values, 0.0)
    return float((neg ** 2).sum()) * f.grid.cell_volume


def negativity_report(traj) -> NegativityReport:
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    min_n = min(float(s.n.values.min()) for s in traj)
    min_c = min(float(s.c.values.min()) for s in traj)
    en = max(negative_part_energy(s.n) for s in traj)
    ec = max(negative_part_energy(s.c) for s in traj)
    return NegativityReport(min_n=min_n, min_c=min_c,
                            max_neg_energy_n=en, max_neg_energy_c=ec)


# ---------------------------------------------------------------------------
# boundary and compatibility residuals

def _boundary_gap(a, b) -> float:
    return max(float(np.abs(getattr(a, s) - getattr(b, s)).max())
               for s in ("left", "right", "bottom", "top"))


def boundary_residual(state: SimState, data: GivenData) -> float:
    """Max over boundary faces of |diffusive flux - chemotactic flux|.

    A stepped state carries the flux pair its solve actually used, which is
    compared directly (identical by construction).  For hand-built states
    the detector falls back to the one-sided normal derivative of the
    density against a freshly evaluated chemotactic flux.
    """
    if (state.bc_flux_diffusive is not None
            and state.bc_flux_chemotactic is not None):
        return _boundary_gap(state.bc_flux_diffusive, state.bc_flux_chemotactic)
    g = state.n.grid
    diff = boundary_normal_derivative_raw(g, state.n.values)
    chem = chemotactic_flux_raw(g, state.n.values, state.c.values, data.S,
                                state.t)
    chem_bc = _chem_boundary(chem)
    return _boundary_gap(diff, chem_bc)


def _chem_boundary(chem: VectorField):
    from .grid import BoundaryData
    return BoundaryData(left=-chem.fx[:, 0], right=chem.fx[:, -1],
                        bottom=-chem.fy[0, :], top=chem.fy[-1, :])


def compatibility_check(n0: ScalarField, c0: ScalarField,
                        S: SensitivitySpec) -> float:
    """Residual of the initial flux balance grad(n0).nu = n0 S(0) grad(c0).nu.

    Needed by the well-posedness theory only in the subcritical exponent
    range; the scheme runs either way, so this is a detector, not a gate.
    """
    g = n0.grid
    diff = boundary_normal_derivative_raw(g, n0.values)
    chem = chemotactic_flux_raw(g, n0.values, c0.values, S, 0.0)
    return _boundary_gap(diff, _chem_boundary(chem))


# ---------------------------------------------------------------------------
# Lipschitz experiment

@dataclass
class LipschitzResult:
    ratio: float
    data_gap: float
    solution_gap: float
    degenerate: bool


def _difference_data(a: GivenData, b: GivenData) -> GivenData:
    g = a.grid
    if a.f is None and b.f is None:
        f_diff = None
    else:
        def f_diff(t):
            fa = a.f(t) if a.f is not None else VectorField.zero(g)
            fb = b.f(t) if b.f is not None else VectorField.zero(g)
            return VectorField(g, fa.ux - fb.ux, fa.uy - fb.uy)
    return GivenData(
        n0=ScalarField(g, a.n0.values - b.n0.values),
        c0=ScalarField(g, a.c0.values - b.c0.values),
        u0=VectorField(g, a.u0.ux - b.u0.ux, a.u0.uy - b.u0.uy),
        phi_grad=a.phi_grad, S=a.S, f=f_diff)


def lipschitz_experiment(base: GivenData, perturbed: GivenData,
                         cfg: DiagnosticsConfig, T: float, dt: float,
                         options=None) -> LipschitzResult:
    """Ratio of the weighted norm of the trajectory difference to the
    smallness functional of the data difference.

    Runs both data sets with identical stepping, differences the
    trajectories in shifted variables, and guards the 0/0 case (identical
    data) by returning ratio 0 with the degenerate flag set.
    """
    from .integrator import RunOptions, run

    opts = options or RunOptions()
    traj_a, _ = run(base, T, dt, opts)
    traj_b, _ = run(perturbed, T, dt, opts)
    if len(traj_a) != len(traj_b):
        raise ValueError("trajectory lengths differ; use identical strides")
    g = base.grid
    diff_traj = []
    for sa, sb in zip(traj_a, traj_b):
        na, ca, _ = _shifted_parts(sa)
        nb, cb, _ = _shifted_parts(sb)
        diff_traj.append(SimState(
            t=sa.t,
            n=ScalarField(g, na.values - nb.values),
            c=ScalarField(g, ca.values - cb.values),
            u=VectorField(g, sa.u.ux - sb.u.ux, sa.u.uy - sb.u.uy),
            n_bar0=0.0))
    gap = smallness_functional(_difference_data(base, perturbed), cfg,
                               T_quad=T)
    sol = weighted_solution_norm(diff_traj, cfg)
    if gap < 1e-14:
        return LipschitzResult(ratio=0.0, data_gap=gap, solution_gap=sol,
                               degenerate=True)
    return LipschitzResult(ratio=sol / gap, data_gap=gap, solution_gap=sol,
                           degenerate=False)
