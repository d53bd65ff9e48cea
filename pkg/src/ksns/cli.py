"""Configuration parsing and scenario orchestration.

Subcommands: ``run`` (full scenario with PASS/FAIL invariant verdicts),
``eigen`` (Poincare constants as one CSV line), ``decay`` (stabilization
rate fits), ``lipschitz`` (data-perturbation experiment), ``nonneg``
(positivity monitors), ``version``.

Config files are plain ``key = value`` text with ``[section]`` headers and
``#`` comments; unknown sections or keys are errors (fail-closed), and
every value is validated against the module preconditions at load time.
Exit codes: 0 all enabled checks pass, 1 check failure, 2 configuration
error, 3 blow-up.
"""

import argparse
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .diagnostics import (DiagnosticsConfig, compatibility_check,
                          fit_decay_rate, lipschitz_experiment,
                          mass_identity_residuals, negativity_report)
from .eigen import lambda_dirichlet, lambda_neumann
from .grid import (DomainSpec, Grid, ScalarField, VectorField, build_grid,
                   integrate, write_field_snapshot)
from .integrator import (BlowUpError, GivenData, RunOptions, SensitivitySpec,
                         run)
from .linstep import helmholtz_project


class ConfigError(Exception):
    """A configuration file failed to parse or validate."""


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


# section -> key -> (python type, default)
_SCHEMA = {
    "domain": {"Lx": (float, 1.0), "Ly": (float, 1.0),
               "nx": (int, 32), "ny": (int, 32)},
    "time": {"dt": (float, 1e-3), "T": (float, 1.0), "theta": (float, 1.0)},
    "solver": {"cg_tol": (float, 1e-10), "projection_tol": (float, 1e-10),
               "blowup_ceiling": (float, 1e6)},
    "picard": {"enabled": (bool, False), "k_max": (int, 1),
               "tol": (float, 1e-10)},
    "data": {"preset": (str, "small-wave"), "n_base": (float, 2.0),
             "c_base": (float, 2.0), "amplitude": (float, 0.01),
             "u_preset": (str, "zero"), "u_amplitude": (float, 0.0)},
    "sensitivity": {"kind": (str, "identity"), "a": (float, 1.0),
                    "b": (float, 0.0)},
    "potential": {"kind": (str, "zero"), "g": (float, 0.0)},
    "forcing": {"kind": (str, "zero"), "amplitude": (float, 0.0),
                "rate": (float, 1.0)},
    "diagnostics": {"r": (float, 4.0), "q": (float, 4.0),
                    "lambda1": (float, 0.5), "lambda2": (float, 0.25),
                    "fit_window_frac": (float, 1.0 / 3.0),
                    "lipschitz_ceiling": (float, 10.0)},
    "eigen": {"tol": (float, 1e-8)},
    "output": {"dir": (str, ""), "snapshot_stride": (int, 10)},
}

_CHOICES = {
    ("data", "preset"): ("constant", "small-wave"),
    ("data", "u_preset"): ("zero", "vortex"),
    ("sensitivity", "kind"): ("identity", "scaled", "rotation"),
    ("potential", "kind"): ("zero", "linear-gravity"),
    ("forcing", "kind"): ("zero", "decaying"),
}


@dataclass
class RunConfig:
    """Resolved, validated configuration for one scenario."""

    values: dict = field(default_factory=dict)

    def __getitem__(self, key: tuple[str, str]):
        return self.values[key]

    def get(self, section: str, key: str):
        return self.values[(section, key)]

    def echo_lines(self) -> list[str]:
        return [f"{s}.{k} = {self.values[(s, k)]}"
                for (s, k) in sorted(self.values)]


def _validate(cfg: RunConfig) -> None:
    def fail(section, key, msg):
        raise ConfigError(f"[{section}] {key}: {msg}")

    v = cfg.values
    for (s, k), choices in _CHOICES.items():
        if v[(s, k)] not in choices:
            fail(s, k, f"must be one of {choices}, got {v[(s, k)]!r}")
    if not (math.isfinite(v[("domain", "Lx")]) and v[("domain", "Lx")] > 0):
        fail("domain", "Lx", "must be a positive length")
    if not (math.isfinite(v[("domain", "Ly")]) and v[("domain", "Ly")] > 0):
        fail("domain", "Ly", "must be a positive length")
    for k in ("nx", "ny"):
        if v[("domain", k)] < 4:
            fail("domain", k, "must be at least 4")
    if not 0 < v[("time", "dt")]:
        fail("time", "dt", "must be positive")
    if not 0 < v[("time", "T")]:
        fail("time", "T", "must be positive")
    if v[("time", "dt")] > v[("time", "T")]:
        fail("time", "dt", "must not exceed T")
    if v[("time", "theta")] not in (1.0, 0.5):
        fail("time", "theta", "must be 1 or 0.5")
    for k in ("cg_tol", "projection_tol"):
        if not 0 < v[("solver", k)] < 1:
            fail("solver", k, "must lie in (0, 1)")
    if not v[("solver", "blowup_ceiling")] > 0:
        fail("solver", "blowup_ceiling", "must be positive")
    if v[("picard", "k_max")] < 1:
        fail("picard", "k_max", "must be at least 1")
    if not v[("picard", "tol")] > 0:
        fail("picard", "tol", "must be positive")
    if not math.isfinite(v[("data", "amplitude")]):
        fail("data", "amplitude", "must be finite")
    r, q = v[("diagnostics", "r")], v[("diagnostics", "q")]
    if not r > 2:
        fail("diagnostics", "r", "must exceed 2 (the space dimension)")
    if not q > 2:
        fail("diagnostics", "q", "must exceed 2")
    if abs(1.0 / r + 2.0 / q - 1.0) < 1e-12:
        fail("diagnostics", "q", "1/r + 2/q = 1 is the excluded critical line")
    lam1, lam2 = v[("diagnostics", "lambda1")], v[("diagnostics", "lambda2")]
    if not 0 < lam1 <= 1:
        fail("diagnostics", "lambda1", "must lie in (0, 1]")
    if not 0 <= lam2 <= lam1:
        fail("diagnostics", "lambda2", "must lie in [0, lambda1]")
    if not 0 < v[("diagnostics", "fit_window_frac")] < 1:
        fail("diagnostics", "fit_window_frac", "must lie in (0, 1)")
    if not v[("diagnostics", "lipschitz_ceiling")] > 0:
        fail("diagnostics", "lipschitz_ceiling", "must be positive")
    if not 0 < v[("eigen", "tol")] <= 1e-3:
        fail("eigen", "tol", "must lie in (0, 1e-3]")
    if v[("output", "snapshot_stride")] < 1:
        fail("output", "snapshot_stride", "must be at least 1")
    if v[("forcing", "kind")] == "decaying" and v[("forcing", "rate")] <= lam2:
        fail("forcing", "rate", "must exceed diagnostics.lambda2 for an "
             "integrable weighted forcing")


def load_config(path: str | None) -> RunConfig:
    """Parse and validate a config file; ``None`` gives pure defaults."""
    values = {(s, k): d for s, sec in _SCHEMA.items()
              for k, (_, d) in sec.items()}
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
        section = None
        seen = set()
        for lineno, raw in enumerate(lines, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                section = line[1:-1].strip()
                if section not in _SCHEMA:
                    raise ConfigError(f"{path}:{lineno}: unknown section "
                                      f"[{section}]")
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            if section is None:
                raise ConfigError(f"{path}:{lineno}: key outside any [section]")
            key, _, raw_val = line.partition("=")
            key = key.strip()
            raw_val = raw_val.strip()
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{path}:{lineno}: unknown key "
                                  f"[{section}] {key}")
            if (section, key) in seen:
                raise ConfigError(f"{path}:{lineno}: duplicate key "
                                  f"[{section}] {key}")
            seen.add((section, key))
            typ, _ = _SCHEMA[section][key]
            try:
                if typ is bool:
                    val = _parse_bool(raw_val)
                elif typ is int:
                    val = int(raw_val)
                elif typ is float:
                    val = float(raw_val)
                else:
                    val = raw_val
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: [{section}] {key}: "
                                  f"{exc}") from None
            values[(section, key)] = val
    cfg = RunConfig(values=values)
    _validate(cfg)
    return cfg


# ---------------------------------------------------------------------------
# scenario builders

def grid_from_config(cfg: RunConfig) -> Grid:
    return build_grid(DomainSpec(Lx=cfg.get("domain", "Lx"),
                                 Ly=cfg.get("domain", "Ly"),
                                 nx=cfg.get("domain", "nx"),
                                 ny=cfg.get("domain", "ny")))


def sensitivity_from_config(cfg: RunConfig) -> SensitivitySpec:
    kind = cfg.get("sensitivity", "kind")
    a, b = cfg.get("sensitivity", "a"), cfg.get("sensitivity", "b")
    if kind == "identity":
        return SensitivitySpec.identity()
    if kind == "scaled":
        return SensitivitySpec.scaled(a)
    return SensitivitySpec.rotation(a, b)


def _vortex(grid: Grid, amplitude: float) -> VectorField:
    Lx, Ly = grid.spec.Lx, grid.spec.Ly
    u = VectorField.from_functions(
        grid,
        lambda x, y: amplitude * 2 * np.pi * np.sin(np.pi * x / Lx) ** 2
        * np.sin(np.pi * y / Ly) * np.cos(np.pi * y / Ly),
        lambda x, y: -amplitude * 2 * np.pi * np.sin(np.pi * x / Lx)
        * np.cos(np.pi * x / Lx) * np.sin(np.pi * y / Ly) ** 2)
    return helmholtz_project(u, 1e-12)


def given_data_from_config(cfg: RunConfig, grid: Grid,
                           amplitude: float | None = None) -> GivenData:
    preset = cfg.get("data", "preset")
    n_base = cfg.get("data", "n_base")
    c_base = cfg.get("data", "c_base")
    amp = cfg.get("data", "amplitude") if amplitude is None else amplitude
    Lx, Ly = grid.spec.Lx, grid.spec.Ly
    if preset == "constant":
        n0 = ScalarField.constant(grid, n_base)
        c0 = ScalarField.constant(grid, c_base)
    else:
        n0 = ScalarField.from_function(
            grid, lambda x, y: n_base + amp * np.cos(np.pi * x / Lx))
        c0 = ScalarField.from_function(
            grid, lambda x, y: c_base + amp * np.cos(np.pi * y / Ly))
    if cfg.get("data", "u_preset") == "vortex":
        u0 = _vortex(grid, cfg.get("data", "u_amplitude"))
    else:
        u0 = VectorField.zero(grid)
    if cfg.get("potential", "kind") == "linear-gravity":
        g_val = cfg.get("potential", "g")
        phi_grad = VectorField.from_functions(grid, lambda x, y: 0.0 * x,
                                              lambda x, y: -g_val + 0.0 * x)
    else:
        phi_grad = VectorField.zero(grid)
    f = None
    if cfg.get("forcing", "kind") == "decaying":
        f_amp = cfg.get("forcing", "amplitude")
        f_rate = cfg.get("forcing", "rate")
        base = VectorField.from_functions(
            grid, lambda x, y: np.cos(np.pi * y / Ly),
            lambda x, y: np.cos(np.pi * x / Lx))

        def f(t, _base=base, _amp=f_amp, _rate=f_rate):
            w = _amp * math.exp(-_rate * t)
            return VectorField(grid, w * _base.ux, w * _base.uy)
    return GivenData(n0=n0, c0=c0, u0=u0, phi_grad=phi_grad,
                     S=sensitivity_from_config(cfg), f=f)


def diagnostics_from_config(cfg: RunConfig) -> DiagnosticsConfig:
    try:
        return DiagnosticsConfig(r=cfg.get("diagnostics", "r"),
                                 q=cfg.get("diagnostics", "q"),
                                 lambda1=cfg.get("diagnostics", "lambda1"),
                                 lambda2=cfg.get("diagnostics", "lambda2"))
    except ValueError as exc:
        raise ConfigError(f"[diagnostics] {exc}") from None


def options_from_config(cfg: RunConfig, stride: int | None = None) -> RunOptions:
    return RunOptions(
        theta=cfg.get("time", "theta"),
        cg_tol=cfg.get("solver", "cg_tol"),
        projection_tol=cfg.get("solver", "projection_tol"),
        picard_enabled=cfg.get("picard", "enabled"),
        picard_k_max=cfg.get("picard", "k_max"),
        picard_tol=cfg.get("picard", "tol"),
        snapshot_stride=stride or cfg.get("output", "snapshot_stride"),
        blowup_ceiling=cfg.get("solver", "blowup_ceiling"))


# ---------------------------------------------------------------------------
# verdicts

def _verdict(name: str, passed: bool, detail: str) -> tuple[bool, str]:
    tag = "PASS" if passed else "FAIL"
    return passed, f"{tag} {name}: {detail}"


def _run_checks(cfg, data, series, trajectory) -> list[tuple[bool, str]]:
    M_n0 = integrate(data.n0)
    M_c0 = integrate(data.c0)
    out = []
    rn, _ = mass_identity_residuals(series, M_n0, M_c0)
    rel = rn / max(abs(M_n0), 1e-300)
    out.append(_verdict("n-mass-conservation", rel <= 1e-10,
                        f"relative drift {rel:.3e} tol 1e-10"))
    dt = cfg.get("time", "dt")
    theta = cfg.get("time", "theta")
    mc = series.column("mass_c")
    mn = series.column("mass_n")
    prev_mc = np.concatenate(([M_c0], mc[:-1]))
    prev_mn = np.concatenate(([M_n0], mn[:-1]))
    rec = np.abs(mc * (1 + theta * dt)
                 - (prev_mc * (1 - (1 - theta) * dt) + dt * prev_mn)).max()
    scale = max(1.0, abs(M_c0) + abs(M_n0))
    out.append(_verdict("c-mass-recursion", rec <= 1e-9 * scale,
                        f"max residual {rec:.3e} tol {1e-9 * scale:.1e}"))
    bc = series.column("bc_residual").max()
    out.append(_verdict("boundary-condition-identity", bc <= 1e-12,
                        f"max residual {bc:.3e} tol 1e-12"))
    if data.n0.values.min() >= 0.0 and data.c0.values.min() >= 0.0:
        sup_n = float(np.abs(data.n0.values).max())
        sup_c = float(np.abs(data.c0.values).max())
        ok = (series.column("min_n").min() >= -1e-8 * sup_n
              and series.column("min_c").min() >= -1e-8 * sup_c
              and series.column("neg_energy_n").max() <= 1e-16 * sup_n ** 2
              and series.column("neg_energy_c").max() <= 1e-16 * sup_c ** 2)
        out.append(_verdict(
            "non-negativity", ok,
            f"min n {series.column('min_n').min():.3e}, "
            f"min c {series.column('min_c').min():.3e}"))
    if cfg.get("data", "preset") == "constant":
        # the state itself must stay put (n, c, u unchanged), checked
        # against the initial fields at every snapshot
        first = trajectory[0]
        dev = max(max(np.abs(s.n.values - first.n.values).max(),
                      np.abs(s.c.values - first.c.values).max(),
                      s.u.magnitude_sup()) for s in trajectory[1:])
        out.append(_verdict("constant-state-fixed-point", dev <= 1e-9,
                            f"max deviation {dev:.3e} tol 1e-9"))
    return out


def _resolve_out_dir(cfg, args) -> str:
    if args.out:
        return args.out
    if cfg.get("output", "dir"):
        return cfg.get("output", "dir")
    return os.environ.get("KSNS_OUT", "ksns_out")


def _write_outputs(out_dir, trajectory, series) -> None:
    os.makedirs(out_dir, exist_ok=True)
    series.to_csv(os.path.join(out_dir, "diagnostics.csv"))
    for idx, state in enumerate(trajectory):
        for name, fld in (("n", state.n), ("c", state.c)):
            write_field_snapshot(
                os.path.join(out_dir, f"snap_{idx:06d}_{name}.csv"),
                fld, name, state.t)
        for name, comp in (("ux", state.u.ux), ("uy", state.u.uy)):
            write_field_snapshot(
                os.path.join(out_dir, f"snap_{idx:06d}_{name}.csv"),
                ScalarField(state.n.grid, comp), name, state.t)


def _startup_diagnostics(cfg, grid, data, need_eigen: bool):
    """Eigen-dependent rate validation and the compatibility warning."""
    diag = diagnostics_from_config(cfg)
    lamN = lamD = None
    if need_eigen:
        tol = cfg.get("eigen", "tol")
        lamN = lambda_neumann(grid, tol)
        lamD = lambda_dirichlet(grid, tol)
        try:
            diag.validate_rates(lamN.lam, lamD.lam)
        except ValueError as exc:
            raise ConfigError(f"[diagnostics] {exc}") from None
    r, q = diag.r, diag.q
    if 1.0 / r + 2.0 / q < 1.0:
        resid = compatibility_check(data.n0, data.c0, data.S)
        h2 = max(grid.hx, grid.hy) ** 2
        scale = 1.0 + float(np.abs(data.n0.values).max())
        if resid > 50.0 * h2 * scale:
            print(f"warning: initial flux-balance residual {resid:.6g} "
                  f"(balance required at these exponents, 1/r + 2/q < 1)")
    return diag, lamN, lamD


# ---------------------------------------------------------------------------
# subcommands

def _cmd_eigen(cfg, args) -> int:
    grid = grid_from_config(cfg)
    tol = cfg.get("eigen", "tol")
    rN = lambda_neumann(grid, tol)
    rD = lambda_dirichlet(grid, tol)
    print(f"{rN.lam:.12g},{rD.lam:.12g},{grid.hx:.12g},"
          f"{rN.iterations + rD.iterations},"
          f"{max(rN.residual, rD.residual):.6g}")
    return 0


def _cmd_run(cfg, args) -> int:
    for line in cfg.echo_lines():
        print(line)
    grid = grid_from_config(cfg)
    data = given_data_from_config(cfg, grid)
    _startup_diagnostics(cfg, grid, data, need_eigen=False)
    opts = options_from_config(cfg, stride=args.snapshot_stride)
    out_dir = _resolve_out_dir(cfg, args)
    try:
        trajectory, series = run(data, cfg.get("time", "T"),
                                 cfg.get("time", "dt"), opts)
    except BlowUpError as exc:
        print(f"blow-up: {exc}")
        if exc.series is not None and len(exc.series):
            os.makedirs(out_dir, exist_ok=True)
            exc.series.to_csv(os.path.join(out_dir, "diagnostics.csv"))
        return 3
    _write_outputs(out_dir, trajectory, series)
    ok = True
    for passed, line in _run_checks(cfg, data, series, trajectory):
        print(line)
        ok = ok and passed
    return 0 if ok else 1


def _cmd_decay(cfg, args) -> int:
    for line in cfg.echo_lines():
        print(line)
    grid = grid_from_config(cfg)
    data = given_data_from_config(cfg, grid)
    diag, lamN, lamD = _startup_diagnostics(cfg, grid, data, need_eigen=True)
    opts = options_from_config(cfg, stride=args.snapshot_stride)
    T, dt = cfg.get("time", "T"), cfg.get("time", "dt")
    try:
        _, series = run(data, T, dt, opts)
    except BlowUpError as exc:
        print(f"blow-up: {exc}")
        return 3
    frac = cfg.get("diagnostics", "fit_window_frac")
    window = (frac * T, T)
    t = series.column("t")
    fit_n = fit_decay_rate(list(zip(t, series.column("sup_n_dev"))), window)
    fit_c = fit_decay_rate(list(zip(t, series.column("sup_c_dev"))), window)
    lam1 = diag.lambda1
    ok = True
    for name, fit in (("n-deviation", fit_n), ("c-deviation", fit_c)):
        passed, line = _verdict(
            f"decay-{name}", fit.rate >= lam1,
            f"fitted rate {fit.rate:.4f} >= lambda1 {lam1:.4f} "
            f"(window [{window[0]:.3g}, {window[1]:.3g}])")
        print(line)
        ok = ok and passed
    strong = 0.8 * lamN.lam
    print(f"INFO empirical n-rate {fit_n.rate:.4f} vs 0.8*lambda_N "
          f"{strong:.4f} (recorded, not asserted); lambda_N {lamN.lam:.6g}, "
          f"lambda_D {lamD.lam:.6g}")
    return 0 if ok else 1


def _cmd_lipschitz(cfg, args) -> int:
    for line in cfg.echo_lines():
        print(line)
    grid = grid_from_config(cfg)
    base = given_data_from_config(cfg, grid)
    diag, _, _ = _startup_diagnostics(cfg, grid, base, need_eigen=False)
    opts = options_from_config(cfg, stride=args.snapshot_stride)
    T, dt = cfg.get("time", "T"), cfg.get("time", "dt")
    amp = cfg.get("data", "amplitude")
    ratios = []
    try:
        for delta in (1e-3, 1e-4):
            pert = given_data_from_config(cfg, grid, amplitude=amp + delta)
            res = lipschitz_experiment(base, pert, diag, T, dt, opts)
            ratios.append(res.ratio)
            print(f"INFO delta {delta:g}: ratio {res.ratio:.6g} "
                  f"data gap {res.data_gap:.6g}")
    except BlowUpError as exc:
        print(f"blow-up: {exc}")
        return 3
    ceiling = cfg.get("diagnostics", "lipschitz_ceiling")
    gap = abs(ratios[0] - ratios[1]) / max(ratios[1], 1e-300)
    ok1, line1 = _verdict("lipschitz-ratio-stability", gap <= 0.2,
                          f"relative gap {gap:.3%} tol 20%")
    ok2, line2 = _verdict("lipschitz-ratio-ceiling",
                          max(ratios) <= ceiling,
                          f"max ratio {max(ratios):.4g} ceiling {ceiling:g}")
    print(line1)
    print(line2)
    return 0 if ok1 and ok2 else 1


def _cmd_nonneg(cfg, args) -> int:
    for line in cfg.echo_lines():
        print(line)
    grid = grid_from_config(cfg)
    data = given_data_from_config(cfg, grid)
    _startup_diagnostics(cfg, grid, data, need_eigen=False)
    opts = options_from_config(cfg, stride=args.snapshot_stride)
    try:
        trajectory, series = run(data, cfg.get("time", "T"),
                                 cfg.get("time", "dt"), opts)
    except BlowUpError as exc:
        print(f"blow-up: {exc}")
        return 3
    rep = negativity_report(trajectory)
    sup_n = float(np.abs(data.n0.values).max())
    sup_c = float(np.abs(data.c0.values).max())
    ok = (rep.min_n >= -1e-8 * sup_n and rep.min_c >= -1e-8 * sup_c
          and rep.max_neg_energy_n <= 1e-16 * sup_n ** 2
          and rep.max_neg_energy_c <= 1e-16 * sup_c ** 2)
    _, line = _verdict("non-negativity", ok,
                       f"min n {rep.min_n:.6g}, min c {rep.min_c:.6g}, "
                       f"neg energies {rep.max_neg_energy_n:.3e} / "
                       f"{rep.max_neg_energy_c:.3e}")
    print(line)
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ksns",
        description="chemotaxis-fluid laboratory with flux-coupled walls")
    parser.add_argument("command",
                        choices=["run", "eigen", "decay", "lipschitz",
                                 "nonneg", "version"])
    parser.add_argument("--config", default=None, help="config file path")
    parser.add_argument("--out", default=None, help="output directory "
                        "(falls back to config, then $KSNS_OUT)")
    parser.add_argument("--threads", type=int, default=1,
                        help="thread count (stepping is single-threaded; "
                        "values above 1 are accepted for sweep drivers)")
    parser.add_argument("--snapshot-stride", type=int, default=None)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    if args.command == "version":
        print(__version__)
        return 0
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return 2
    if args.snapshot_stride is not None and args.snapshot_stride < 1:
        print("error: --snapshot-stride must be at least 1", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    handler = {"run": _cmd_run, "eigen": _cmd_eigen, "decay": _cmd_decay,
               "lipschitz": _cmd_lipschitz, "nonneg": _cmd_nonneg}[args.command]
    try:
        return handler(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


def cli_entry() -> None:
    sys.exit(main())
