"""Command-line front end: config parsing, scenario runs and file output.

Exit codes: 0 success, 1 numerical failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import analysis, kernels, matops, simulator, transforms
from .model import (ConfigError, Grid, PlantConfig, SimplifiedConfig, initial_condition,
                    random_smooth_state, validate_config)

PLANT_KEYS = ("n", "lambda1", "lambda2", "sigma12", "sigma21", "theta1", "theta2",
              "omega1", "omega2", "psi", "q", "rho")
SIMPLIFIED_KEYS = ("lambda", "psi", "omega")
NUMERICAL_ERRORS = (kernels.KernelConvergenceError, transforms.SeriesDivergenceError,
                    simulator.SimulationOverflow, matops.EigenIterationError,
                    FloatingPointError)


# -- configuration ----------------------------------------------------------

def _is_real(val):
    return isinstance(val, (int, float)) and not isinstance(val, bool)


def _real(doc, key, errors):
    val = doc[key]
    if not _is_real(val):
        errors.append((key, f"{key}: expected a number, got {json.dumps(val)}"))
        return math.nan
    return float(val)


def _vector(doc, key, n, errors):
    val = doc[key]
    if not isinstance(val, list):
        errors.append((key, f"{key}: expected a list of {n} numbers"))
        return None
    if len(val) != n:
        errors.append((key, f"{key}: expected {n} entries, got {len(val)}"))
        return None
    for i, item in enumerate(val):
        if not _is_real(item):
            errors.append((f"{key}[{i}]", f"{key}[{i}]: expected a number, got {json.dumps(item)}"))
            return None
    return [float(a) for a in val]


def _matrix(doc, key, n, errors):
    val = doc[key]
    if not isinstance(val, list) or len(val) != n:
        errors.append((key, f"{key}: expected {n} rows"))
        return None
    rows = []
    for i, row in enumerate(val):
        path = f"{key}[{i}]"
        if not isinstance(row, list) or len(row) != n:
            got = len(row) if isinstance(row, list) else "a non-list"
            errors.append((path, f"{path}: expected a row of {n} numbers, got {got}"))
            return None
        for j, item in enumerate(row):
            if not _is_real(item):
                errors.append((f"{path}[{j}]", f"{path}[{j}]: expected a number"))
                return None
        rows.append([float(a) for a in row])
    return rows


def _check_keys(doc, allowed):
    errors = [(k, f"{k}: unknown key") for k in doc if k not in allowed]
    errors += [(k, f"{k}: missing key") for k in allowed if k not in doc]
    return errors


def parse_config(text):
    """Parse a JSON document into a validated PlantConfig or a SimplifiedConfig.

    A document with a ``lambda`` key describes the scalar pair; otherwise all
    plant keys are required. Every problem is reported with its key path,
    e.g. ``psi[1]``.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([("<document>", f"malformed JSON: {exc.msg} (line {exc.lineno})")]) from None
    if not isinstance(doc, dict):
        raise ConfigError([("<document>", "top level must be a JSON object")])

    if "lambda" in doc:
        errors = _check_keys(doc, SIMPLIFIED_KEYS)
        if errors:
            raise ConfigError(errors)
        vals = {k: _real(doc, k, errors) for k in SIMPLIFIED_KEYS}
        if errors:
            raise ConfigError(errors)
        return SimplifiedConfig(lam=vals["lambda"], psi=vals["psi"], omega=vals["omega"])

    errors = _check_keys(doc, PLANT_KEYS)
    if errors:
        raise ConfigError(errors)
    n = doc["n"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise ConfigError([("n", "n: expected a positive integer")])
    scalars = {k: _real(doc, k, errors) for k in ("lambda1", "lambda2", "sigma12", "sigma21", "q", "rho")}
    vectors = {k: _vector(doc, k, n, errors) for k in ("theta1", "theta2", "omega1", "omega2")}
    psi = _matrix(doc, "psi", n, errors)
    if errors:
        raise ConfigError(errors)
    return validate_config(PlantConfig(n=n, psi=psi, **scalars, **vectors))


def load_config(ref):
    """Read a config from a path, falling back to the bundled files by name."""
    path = Path(ref)
    if path.is_file():
        return parse_config(path.read_text())
    bundled = resources.files("atachic") / "data" / path.name
    if not bundled.name.endswith(".json"):
        bundled = resources.files("atachic") / "data" / (path.name + ".json")
    if bundled.is_file():
        return parse_config(bundled.read_text())
    raise ConfigError([("config", f"no such file {ref!r}")])


# -- output helpers -----------------------------------------------------------

def write_csv(path, header, columns):
    """Numeric CSV with one header row and 17 significant digits."""
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header=",".join(header), comments="")
    return path


def write_report(path, items):
    with open(path, "w") as fh:
        fh.write("quantity,value\n")
        for name, val in items:
            fh.write(f"{name},{float(val):.17g}\n")
    return path


@dataclass(frozen=True)
class RunManifest:
    command: str
    config: str
    out: Path
    grid: int = 200
    kernel_grid: int | None = None
    t_final: float | None = None
    cfl: float = 0.9
    controller: str = "backstep"
    ic: str = "sine(1,1,1)"
    stride: int = 10
    seed: int = 0
    svg: bool = False
    signal: str = "sine"

    @property
    def mk(self):
        return self.kernel_grid or self.grid


def _plant(manifest):
    cfg = load_config(manifest.config)
    if not isinstance(cfg, PlantConfig):
        raise ConfigError([("config", f"{manifest.command} needs a plant config, got the scalar form")])
    return cfg


def _say(msg):
    print(msg)


# -- subcommands ----------------------------------------------------------------

def cmd_check(manifest):
    cfg = load_config(manifest.config)
    if isinstance(cfg, SimplifiedConfig):
        _say(f"scalar pair: lambda={cfg.lam:g} psi={cfg.psi:g} omega={cfg.omega:g}")
        _say(f"open-loop unstable zero-speed state: {cfg.psi > 0}")
        return 0
    re_parts = matops.eigen_real_parts(cfg.psi)
    _say(f"plant with n={cfg.n}: valid")
    _say(f"psi eigenvalue real parts: {', '.join(f'{r:.6g}' for r in re_parts)}")
    _say(f"hurwitz: {cfg.hurwitz}")
    _say(f"psi + psi^T negative definite: {cfg.sym_neg_definite}")
    margin = matops.sym_decay_margin(cfg.psi)
    if margin is not None:
        _say(f"symmetric decay margin: {margin:.10g}")
    return 0


def cmd_kernels(manifest):
    cfg = _plant(manifest)
    out = manifest.out
    ks = kernels.solve_direct_kernels(cfg, manifest.mk)
    i, j = ks.nodes()
    x = np.linspace(0.0, 1.0, ks.m + 1)
    header = ["x", "xi", "K1", "K2", "Q1", "Q2"]
    header += [f"G_{k + 1}" for k in range(ks.n)] + [f"R_{k + 1}" for k in range(ks.n)]
    cols = [x[i], x[j], ks.K1[i, j], ks.K2[i, j], ks.Q1[i, j], ks.Q2[i, j]]
    cols += [ks.G[i, j, k] for k in range(ks.n)] + [ks.R[i, j, k] for k in range(ks.n)]
    write_csv(out / "kernels.csv", header, cols)

    res = kernels.kernel_residual(ks, cfg)
    defects = kernels.boundary_defects(ks, cfg)
    items = [(f"residual_{k}", v) for k, v in res.items()] + [(f"defect_{k}", v) for k, v in defects.items()]
    items += [("sweeps", ks.iterations), ("last_change", ks.last_change)]
    write_report(out / "kernel_residuals.csv", items)
    _say(f"kernels solved on m_k={ks.m} in {ks.iterations} sweeps")
    for name, val in items:
        _say(f"  {name:>18s} {val:.6e}")
    if manifest.svg:
        from . import plotting
        plotting.plot_kernels(ks, out / "kernels.svg")
    return 0


def _controller(manifest, cfg):
    if manifest.controller == "open":
        return simulator.OpenLoop(), None
    if manifest.controller == "zero":
        return simulator.ZeroInflow(), None
    ks = kernels.solve_direct_kernels(cfg, manifest.mk)
    return simulator.Backstepping(ks, cfg, manifest.grid), ks


def _norm_columns(traj):
    rec = traj.arrays()
    return rec, ["t", "U", "norm_u", "norm_p", "norm_v", "logV"], [rec[k] for k in ("t", "U", "norm_u", "norm_p", "norm_v", "V")]


def _write_fields(path, traj, n):
    snaps = traj.snapshots
    m = snaps[0].m
    x = np.linspace(0.0, 1.0, m + 1)
    t = np.repeat([s.t for s in snaps], m + 1)
    cols = [t, np.tile(x, len(snaps)), np.concatenate([s.u for s in snaps]),
            np.concatenate([s.p for s in snaps])]
    cols += [np.concatenate([s.v[k] for s in snaps]) for k in range(n)]
    write_csv(path, ["t", "x", "u", "p"] + [f"v_{k + 1}" for k in range(n)], cols)


def _simulation_outputs(manifest, traj, cfg):
    out = manifest.out
    rec, header, cols = _norm_columns(traj)
    write_csv(out / "norms.csv", header, cols)
    _write_fields(out / "fields.csv", traj, cfg.n)
    if manifest.svg:
        from . import plotting
        plotting.plot_norms(rec, out / "norms.svg")
        t = np.array([s.t for s in traj.snapshots])
        x = np.linspace(0.0, 1.0, traj.snapshots[0].m + 1)
        plotting.plot_spacetime(t, x, np.array([s.u for s in traj.snapshots]), out / "fields_u.svg", "u(t, x)")
        plotting.plot_spacetime(t, x, np.array([s.p for s in traj.snapshots]), out / "fields_p.svg", "p(t, x)")


def cmd_simulate(manifest):
    cfg = _plant(manifest)
    grid = Grid.for_plant(cfg, manifest.grid, manifest.cfl)
    ic = initial_condition(manifest.ic, grid, cfg.n)
    ctl, ks = _controller(manifest, cfg)
    monitor = None
    if ks is not None and cfg.sym_neg_definite:
        lp = analysis.lyapunov_constants(cfg, transforms.invert_kernels(ks, cfg))
        monitor = analysis.lyapunov_monitor(lp, ks, cfg, manifest.grid)
    t_final = manifest.t_final if manifest.t_final is not None else 10.0
    try:
        traj = simulator.simulate(cfg, grid, ic, t_final, ctl, manifest.stride, monitor)
    except simulator.SimulationOverflow as exc:
        if exc.trajectory.t:
            _simulation_outputs(manifest, exc.trajectory, cfg)
        raise
    _simulation_outputs(manifest, traj, cfg)
    total = traj.total_norm
    _say(f"{ctl.name} run to t={traj.t[-1]:g}: total L2 norm {total[0]:.6g} -> {total[-1]:.6g} "
         f"(peak {total.max():.6g})")
    return 0


def cmd_verify(manifest):
    cfg = _plant(manifest)
    out = manifest.out
    m = manifest.grid
    ks = kernels.solve_direct_kernels(cfg, manifest.mk)
    res = kernels.kernel_residual(ks, cfg)
    iks = transforms.invert_kernels(ks.on_grid(m), cfg)
    items = [(f"kernel_residual_{k}", v) for k, v in res.items()]
    items.append(("kernel_max_boundary_defect", max(kernels.boundary_defects(ks, cfg).values())))

    grid = Grid.for_plant(cfg, m, manifest.cfl)
    rng = np.random.default_rng(manifest.seed)
    op = transforms.ForwardOperator.from_kernels(ks, m)
    worst = 0.0
    for _ in range(10):
        s = random_smooth_state(grid, cfg.n, rng)
        a, b = op.apply(s.u, s.p, s.v)
        u, p = transforms.inverse_transform(a, b, s.v, iks)
        worst = max(worst, float(np.abs(u - s.u).max()), float(np.abs(p - s.p).max()))
    items.append(("roundtrip_max_error", worst))

    lp = analysis.lyapunov_constants(cfg, iks)
    monitor = analysis.lyapunov_monitor(lp, ks, cfg, m) if lp else None
    ic = initial_condition(manifest.ic, grid, cfg.n)
    t_final = manifest.t_final if manifest.t_final is not None else 10.0
    traj = simulator.simulate(cfg, grid, ic, t_final, simulator.Backstepping(ks, cfg, m),
                              manifest.stride, monitor)
    t_star = 1.0 / cfg.lambda1 + 1.0 / cfg.lambda2
    tr = transforms.target_residual(traj, ks, iks, cfg, t_min=t_star)
    alpha0 = [abs(op.apply(s.u, s.p, s.v)[0][0]) for s in traj.snapshots[1:]]
    items.append(("alpha_at_0_max_after_start", max(alpha0)))
    items += [(f"target_{k}", v) for k, v in tr.items() if k != "alpha_at_0"]
    total = traj.total_norm
    items += [("total_norm_initial", total[0]), ("total_norm_final", total[-1])]

    if lp is not None:
        rec = traj.arrays()
        t, logv = rec["t"], rec["V"]
        sel = t >= t_star
        steps = np.diff(logv[sel])
        items += [("lyap_mu", lp.mu), ("lyap_vartheta", lp.vartheta), ("lyap_rho_star", lp.rho_star),
                  ("lyap_log_A", lp.log_A), ("lyap_log_K", lp.log_K),
                  ("lyap_nbar1", lp.nbar1), ("lyap_nbar2", lp.nbar2), ("lyap_nbar3", lp.nbar3),
                  ("lyap_logV_slope_after_transient", analysis.log_slope(t[sel], logv[sel])),
                  ("lyap_max_step_increase_logV", steps.max()),
                  ("lyap_steps_increasing", int(np.sum(steps > math.log1p(1e-6)))),
                  ("lyap_steps_checked", steps.size)]
        write_csv(out / "lyapunov.csv", ["t", "logV", "logV_slope"], [t, logv, np.gradient(logv, t)])
        if manifest.svg:
            from . import plotting
            plotting.plot_lines(t, {"log V": logv}, out / "lyapunov.svg", "Lyapunov functional")
    else:
        _say("psi + psi^T is not negative definite: no Lyapunov certificate")
    write_report(out / "verify.csv", items)
    for name, val in items:
        _say(f"  {name:>34s} {float(val):.6e}")
    return 0


def obstruction_data(scfg, grid):
    """Fixed initial pair outside S used by the obstruction demo."""
    x = grid.x
    return (lambda s: np.sin(np.pi * np.asarray(s))), 1.0 + 0.5 * np.cos(np.pi * x)


def cmd_obstruct(manifest):
    scfg = load_config(manifest.config)
    if not isinstance(scfg, SimplifiedConfig):
        raise ConfigError([("config", "obstruct needs the scalar form {lambda, psi, omega}")])
    grid = Grid(manifest.grid, manifest.cfl, scfg.lam)
    u0f, v0 = obstruction_data(scfg, grid)
    u0 = u0f(grid.x)
    U = simulator.scripted_input(manifest.signal)
    t_final = manifest.t_final if manifest.t_final is not None else 4.0
    times = np.linspace(0.0, t_final, 201)
    traj = simulator.simulate_simplified_exact(scfg, u0f, v0, U, times, grid)
    R, wmax, inside = [], [], []
    for u, v in zip(traj.u, traj.v):
        R.append(analysis.functional_R(scfg, u0, v0, u, v, grid).R)
        wmax.append(float(np.abs(analysis.w_transform(scfg, u, v, grid)).max()))
        inside.append(float(analysis.in_subspace_S(scfg, u, v, grid)[0]))
    R = np.array(R)
    write_csv(manifest.out / "obstruction.csv", ["t", "R", "w_maxabs", "in_S"], [times, R, wmax, inside])
    dev = np.abs(R / (R[0] * np.exp(scfg.psi * times)) - 1.0).max() if R[0] else math.nan
    _say(f"input {manifest.signal}: R(t)/R(0) deviates from exp(psi t) by at most {dev:.3e}")
    _say(f"initial pair in S: {bool(inside[0])}; final total norm floor "
         f"{analysis.norm_floor(scfg, R[-1], analysis.functional_R(scfg, u0, v0, u0, v0, grid).h):.4g}")
    if manifest.svg:
        from . import plotting
        plotting.plot_lines(times, {"|R|": np.abs(R), "max |w|": wmax}, manifest.out / "obstruction.svg",
                            f"input: {manifest.signal}", logy=True)
    return 0


COMMANDS = {"check": cmd_check, "kernels": cmd_kernels, "simulate": cmd_simulate,
            "verify": cmd_verify, "obstruct": cmd_obstruct}


def run(manifest):
    """Execute one manifest; returns the process exit status."""
    try:
        manifest.out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[manifest.command](manifest)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except NUMERICAL_ERRORS as exc:
        module = type(exc).__module__.rsplit(".", 1)[-1]
        print(f"error: {module}: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def build_parser():
    parser = argparse.ArgumentParser(prog="atachic", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="JSON config path or bundled name")
    common.add_argument("--out", default=".", type=Path, help="output directory")
    common.add_argument("--grid", type=int, default=200, help="spatial cells m")
    common.add_argument("--kernel-grid", type=int, default=None, help="kernel lattice cells (default: --grid)")
    common.add_argument("--tfinal", type=float, default=None)
    common.add_argument("--cfl", type=float, default=0.9)
    common.add_argument("--controller", choices=("open", "backstep", "zero"), default="backstep")
    common.add_argument("--ic", default="sine(1,1,1)", help="initial-condition preset")
    common.add_argument("--stride", type=int, default=10, help="snapshot stride in steps")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--svg", action="store_true", help="also write SVG figures")
    common.add_argument("--input", dest="signal", choices=("zero", "sine", "decay"), default="sine",
                        help="scripted input for obstruct")
    helps = {"check": "validate a config", "kernels": "solve and export the kernels",
             "simulate": "run the plant", "verify": "check the closed loop against the target system",
             "obstruct": "scalar pair outside the stabilizable subspace"}
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    default = "simplified.json" if args.command == "obstruct" else "paper_iv.json"
    manifest = RunManifest(command=args.command, config=args.config or default, out=args.out,
                           grid=args.grid, kernel_grid=args.kernel_grid, t_final=args.tfinal,
                           cfl=args.cfl, controller=args.controller, ic=args.ic, stride=args.stride,
                           seed=args.seed, svg=args.svg, signal=args.signal)
    return run(manifest)


if __name__ == "__main__":
    sys.exit(main())
