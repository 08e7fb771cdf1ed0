"""Command line interface.

Every command reads one JSON configuration (``--config``), applies flag
overrides, validates the result before any computation and writes a JSON
report (sorted keys) plus snapshots and CSV tables into ``output_dir``.

Exit codes: 0 completed/converged, 2 completed without convergence (or no
solution found), 1 configuration or IO error.  Artifacts are staged in a
temporary directory and only moved into place once the run has finished,
so a failed run leaves nothing behind.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import shutil
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bubbles import unboundedness_scan
from .curvature import (
    Constant,
    CurvatureSpec,
    Cyclic,
    FourierCosSin,
    FullRotation,
    RadialPolynomial,
    Tabulated,
    Trivial,
    check_hypotheses,
    deficit,
    eval_curvatures,
    read_tabulated_csv,
)
from .diagnostics import blow_up_candidates, chi_quantization_check, gauss_bonnet_terms, lebedev_milin_gap
from .energy import DiscreteFunctional, ExpOverflow, energy_I, perturbed_coeffs
from .errors import ConfigError, CurvatureError, PathCollapse, SingularJacobian, UnderResolved
from .grid import Grid, read_snapshot
from .radial import mismatch_scan, pohozaev_residual, radial_coeffs_from_spec, radial_gauss_bonnet, solve_radial
from .solvers import (
    DEFAULT_SCHEDULE,
    SolverOptions,
    continuation_solve,
    default_endpoints,
    default_start,
    gradient_flow,
    morse_index_G,
    mountain_pass,
    newton_solve,
)

COMMANDS = ("solve", "solve-radial", "mountain-pass", "bubble-scan", "diagnose", "nonexistence-scan", "check-hypotheses")
EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2

DEFAULTS = {
    "command": None,
    "curvature": None,
    "grid": [128, 256],
    "solver": {
        "method": "continuation",
        "eps": 0.0,
        "max_iters": 50,
        "tol_residual": 1e-9,
        "damping": 0.5,
        "eps_schedule": list(DEFAULT_SCHEDULE),
        "flow_step": 1.0,
        "u_cap": 200.0,
        "energy_floor": -1e6,
        "morse": True,
        "n_eigs": 6,
    },
    "scan": {
        "mu_schedule": [1.2, 1.1, 1.05, 1.02, 1.01],
        "r_off": None,
        "k": 1,
        "base_angle": 0.0,
        "a_bracket": None,
        "n_scan": 200,
        "n_steps": 4096,
        "n_starts": 0,
    },
    "mountain_pass": {"n_path": 33, "max_steps": 200, "zoom_levels": 4, "u_low": -8.0, "margin": 1.0},
    "input": None,
    "output_dir": "out",
    "seed": 0,
}

SOLVER_METHODS = ("continuation", "newton", "gradient_flow")


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def _merge(base, override, path=""):
    """Recursive merge rejecting keys absent from ``base``."""
    out = copy.deepcopy(base)
    for key, val in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key '{where}'")
        if isinstance(base[key], dict) and base[key] and val is not None:
            if not isinstance(val, dict):
                raise ConfigError(f"'{where}' must be an object")
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = val
    return out


def _number(d, key, where):
    try:
        return float(d[key])
    except KeyError:
        raise ConfigError(f"{where}: missing '{key}'") from None
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: '{key}' must be a number") from None


def _only(d, keys, where):
    extra = set(d) - set(keys) - {"kind"}
    if extra:
        raise ConfigError(f"{where}: unknown keys {sorted(extra)}")


def parse_curvature_def(d, grid, where, base_dir):
    """Curvature definition from ``{"kind": ..., parameters}``."""
    if isinstance(d, (int, float)):
        return Constant(float(d))
    if not isinstance(d, dict) or "kind" not in d:
        raise ConfigError(f"{where}: expected a number or an object with 'kind'")
    kind = d["kind"]
    if kind == "constant":
        _only(d, ("value",), where)
        return Constant(_number(d, "value", where))
    if kind == "radial_polynomial":
        _only(d, ("coeffs",), where)
        try:
            return RadialPolynomial(tuple(float(c) for c in d["coeffs"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: 'coeffs' must be a non-empty list of numbers") from exc
    if kind == "fourier":
        _only(d, ("modes",), where)
        modes = d.get("modes")
        if not isinstance(modes, dict):
            raise ConfigError(f"{where}: 'modes' must map mode numbers to value or [cos, sin]")
        try:
            return FourierCosSin({int(m): (tuple(v) if isinstance(v, list) else float(v)) for m, v in modes.items()})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: bad Fourier modes: {exc}") from exc
    if kind == "tabulated":
        _only(d, ("file",), where)
        path = Path(d.get("file", ""))
        if not path.is_absolute():
            path = base_dir / path
        try:
            return Tabulated(read_tabulated_csv(path, grid))
        except OSError as exc:
            raise ConfigError(f"{where}: cannot read {path}: {exc}") from exc
    raise ConfigError(f"{where}: unknown curvature kind '{kind}'")


def parse_group(d):
    if d is None or d == "trivial" or d == {"kind": "trivial"}:
        return Trivial()
    if d == "full_rotation" or d == {"kind": "full_rotation"}:
        return FullRotation()
    if isinstance(d, dict) and d.get("kind") == "cyclic" and set(d) <= {"kind", "k"}:
        try:
            return Cyclic(int(d["k"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"curvature.group: {exc}") from exc
    raise ConfigError(f"curvature.group: expected 'trivial', 'full_rotation' or {{'kind': 'cyclic', 'k': k}}, got {d!r}")


@dataclass
class RunConfig:
    """Validated run configuration."""

    command: str
    spec: CurvatureSpec | None
    grid: Grid
    solver: dict
    opts: SolverOptions
    scan: dict
    mountain_pass: dict
    input: Path | None
    output_dir: Path
    seed: int
    raw: dict = field(repr=False, default_factory=dict)


def build_config(raw, base_dir=Path(".")):
    """Validate a merged configuration dictionary."""
    cmd = raw["command"]
    if cmd not in COMMANDS:
        raise ConfigError(f"command must be one of {COMMANDS}, got {cmd!r}")
    try:
        n_r, n_t = (int(x) for x in raw["grid"])
        grid = Grid(n_r, n_t)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"grid: {exc}") from exc
    s = raw["solver"]
    if s["method"] not in SOLVER_METHODS:
        raise ConfigError(f"solver.method must be one of {SOLVER_METHODS}")
    spec = None
    cv = raw["curvature"]
    if cv is None:
        if cmd != "diagnose" or raw["input"] is None:
            raise ConfigError("missing 'curvature'")
    else:
        if not isinstance(cv, dict):
            raise ConfigError("'curvature' must be an object")
        extra = set(cv) - {"K", "h", "group"}
        if extra:
            raise ConfigError(f"unknown config keys {sorted('curvature.' + k for k in extra)}")
        if "K" not in cv or "h" not in cv:
            raise ConfigError("curvature needs both 'K' and 'h'")
        try:
            K = parse_curvature_def(cv["K"], grid, "curvature.K", base_dir)
            h = parse_curvature_def(cv["h"], grid, "curvature.h", base_dir)
            spec = CurvatureSpec(K, h, parse_group(cv.get("group")))
            eval_curvatures(spec, grid)
        except ConfigError:
            raise
        except (CurvatureError, ValueError) as exc:
            raise ConfigError(f"curvature: {exc}") from exc
    try:
        opts = SolverOptions(
            max_iters=int(s["max_iters"]),
            tol_residual=float(s["tol_residual"]),
            damping=float(s["damping"]),
            eps_schedule=tuple(s["eps_schedule"]),
            flow_step=float(s["flow_step"]),
            group=spec.group if spec else Trivial(),
            u_cap=float(s["u_cap"]),
            energy_floor=float(s["energy_floor"]),
        )
        if float(s["eps"]) < 0:
            raise ValueError("solver.eps must be >= 0")
        seed = int(raw["seed"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"solver: {exc}") from exc
    inp = raw["input"]
    if cmd == "diagnose" and inp is None:
        raise ConfigError("diagnose needs 'input' (a snapshot file)")
    if inp is not None:
        inp = Path(inp) if Path(inp).is_absolute() else base_dir / inp
    return RunConfig(cmd, spec, grid, s, opts, raw["scan"], raw["mountain_pass"], inp, Path(raw["output_dir"]), seed, raw)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

class Artifacts:
    """Files written by a command, staged in a temporary directory."""

    def __init__(self, staging):
        self.dir = Path(staging)
        self.names = []

    def path(self, name):
        self.names.append(name)
        return self.dir / name

    def json(self, name, obj):
        self.path(name).write_text(json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=True) + "\n")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def _curvatures(cfg):
    return eval_curvatures(cfg.spec, cfg.grid)


def _morse(cfg, u, c):
    if not cfg.solver["morse"]:
        return None
    m = morse_index_G(u, c, cfg.opts.group, n_eigs=int(cfg.solver["n_eigs"]))
    return {"index": m.index, "eigenvalues": m.eigenvalues, "tol_eig": m.tol_eig}


def cmd_check_hypotheses(cfg, art):
    rep = check_hypotheses(cfg.spec, cfg.grid)
    art.json("report.json", {"command": cfg.command, "hypotheses": rep.as_dict()})
    return EXIT_OK


def cmd_solve(cfg, art):
    K, h = _curvatures(cfg)
    method = cfg.solver["method"]
    report = {"command": cfg.command, "method": method, "hypotheses": check_hypotheses(cfg.spec, cfg.grid).as_dict()}
    if method == "continuation":
        records = continuation_solve(cfg.spec, cfg.grid, cfg.opts)
        rec = records[-1]
        report["stages"] = [r.as_dict() for r in records]
        report["chi_check"] = chi_quantization_check(records).as_dict()
        c = perturbed_coeffs(K, h, rec.eps)
    else:
        c = perturbed_coeffs(K, h, float(cfg.solver["eps"]))
        u0 = default_start(K, h, cfg.grid)
        solver = newton_solve if method == "newton" else gradient_flow
        try:
            rec = solver(u0, c, cfg.opts)
        except SingularJacobian as exc:
            rec = exc.record
    report["solution"] = rec.as_dict()
    report["gauss_bonnet_residual"] = rec.gauss_bonnet_residual
    area, bdy = gauss_bonnet_terms(rec.u, c.K_eff, c.h_eff)
    report["gauss_bonnet_terms"] = {"area": area, "boundary": bdy}
    report["converged"] = rec.converged
    report["morse_index_G"] = _morse(cfg, rec.u, c) if rec.converged else None
    rec.write(art.path("solution.txt").with_suffix(""))
    art.names += ["solution.json", "solution_log.csv"]
    art.json("report.json", report)
    return EXIT_OK if rec.converged else EXIT_NOT_CONVERGED


def _radial_setup(cfg):
    try:
        rc = radial_coeffs_from_spec(cfg.spec, float(cfg.solver["eps"]))
    except ValueError as exc:
        raise ConfigError(f"radial reduction: {exc}") from exc
    sc = cfg.scan
    bracket = tuple(float(x) for x in sc["a_bracket"]) if sc["a_bracket"] is not None else None
    return rc, bracket, int(sc["n_scan"]), int(sc["n_steps"])


def cmd_solve_radial(cfg, art):
    rc, bracket, n_scan, n_steps = _radial_setup(cfg)
    roots = solve_radial(rc, bracket, n_scan, n_steps)
    scan = mismatch_scan(rc, bracket, n_scan, n_steps)
    scan.write_csv(art.path("mismatch_scan.csv"))
    rows = []
    for i, p in enumerate(roots):
        p.write_csv(art.path(f"profile_{i}.csv"))
        rows.append(
            {
                "a": p.a,
                "u_boundary": float(p.u[-1]),
                "pohozaev_residual": pohozaev_residual(p),
                "gauss_bonnet_residual": radial_gauss_bonnet(p),
            }
        )
    art.json(
        "report.json",
        {"command": cfg.command, "eps": rc.eps, "chi": rc.chi, "min_F": scan.min_F, "roots": rows, "converged": bool(roots)},
    )
    return EXIT_OK if roots else EXIT_NOT_CONVERGED


def cmd_nonexistence_scan(cfg, art):
    rc, bracket, n_scan, n_steps = _radial_setup(cfg)
    scan = mismatch_scan(rc, bracket, n_scan, n_steps)
    scan.write_csv(art.path("mismatch_scan.csv"))
    roots = solve_radial(rc, bracket, n_scan, n_steps)
    report = {"command": cfg.command, "min_F": scan.min_F, "radial_roots": [p.a for p in roots]}
    n_starts = int(cfg.scan["n_starts"])
    runs = []
    if n_starts:
        K, h = _curvatures(cfg)
        c = perturbed_coeffs(K, h, 0.0)
        rng = np.random.default_rng(cfg.seed)
        for _ in range(n_starts):
            a = rng.uniform(-3.0, 2.0)
            b = 0.3 * rng.standard_normal(4)
            u0 = cfg.grid.polar_field(
                lambda r, t: a + b[0] * r * r + b[1] * r * np.cos(t) + b[2] * r * np.sin(t) + b[3] * r * r * np.cos(2 * t)
            )
            try:
                rec = newton_solve(u0, c, cfg.opts)
            except SingularJacobian as exc:
                rec = exc.record
            runs.append({"converged": rec.converged, "status": rec.status, "residual": rec.residual})
    report["newton_starts"] = runs
    found = bool(roots) or any(r["converged"] for r in runs)
    report["converged"] = found
    art.json("report.json", report)
    return EXIT_OK if found else EXIT_NOT_CONVERGED


def cmd_bubble_scan(cfg, art):
    K, h = _curvatures(cfg)
    sc = cfg.scan
    try:
        mus = [float(m) for m in sc["mu_schedule"]]
        table = unboundedness_scan(K, h, cfg.grid, mus, sc["r_off"], int(sc["k"]), float(sc["base_angle"]))
    except UnderResolved as exc:
        raise ConfigError(f"{exc}; use grid {list(exc.required)}") from exc
    table.write_csv(art.path("bubble_scan.csv"))
    E = table.energies
    art.json(
        "report.json",
        {
            "command": cfg.command,
            "D_min": table.D_min,
            "energies": E,
            "strictly_decreasing": bool(np.all(np.diff(E) < 0)),
            "strictly_increasing": bool(np.all(np.diff(E) > 0)),
        },
    )
    return EXIT_OK


def cmd_mountain_pass(cfg, art):
    K, h = _curvatures(cfg)
    c = perturbed_coeffs(K, h, float(cfg.solver["eps"]))
    mp = cfg.mountain_pass
    try:
        ua, ub = default_endpoints(K, h, cfg.grid, float(mp["u_low"]), float(mp["margin"]))
    except UnderResolved as exc:
        raise ConfigError(f"{exc}; use grid {list(exc.required)}") from exc
    report = {"command": cfg.command}
    try:
        res = mountain_pass(ua, ub, c, int(mp["n_path"]), cfg.opts, int(mp["max_steps"]), int(mp["zoom_levels"]))
    except PathCollapse as exc:
        report.update(converged=False, error=str(exc))
        art.json("report.json", report)
        return EXIT_NOT_CONVERGED
    rec = res.critical_point
    report.update(res.as_dict())
    report["converged"] = rec.converged
    report["gauss_bonnet_residual"] = rec.gauss_bonnet_residual
    report["morse_index_G"] = _morse(cfg, rec.u, c) if rec.converged else None
    rec.write(art.path("critical_point.txt").with_suffix(""))
    art.names += ["critical_point.json", "critical_point_log.csv"]
    art.json("report.json", report)
    return EXIT_OK if rec.converged else EXIT_NOT_CONVERGED


def cmd_diagnose(cfg, art):
    try:
        u = read_snapshot(cfg.input)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read snapshot {cfg.input}: {exc}") from exc
    report = {"command": cfg.command, "grid": [u.grid.n_r, u.grid.n_theta], "lebedev_milin_gap": lebedev_milin_gap(u)}
    if cfg.spec is not None:
        K, h = eval_curvatures(cfg.spec, u.grid)
        c = perturbed_coeffs(K, h, float(cfg.solver["eps"]))
        F = DiscreteFunctional(c)
        try:
            norms = F.residual_norms(u.data.ravel())
        except ExpOverflow:
            norms = (math.inf, math.inf)
        area, bdy = gauss_bonnet_terms(u, c.K_eff, c.h_eff)
        report.update(
            residual_interior=norms[0],
            residual_boundary=norms[1],
            energy=energy_I(u, K, h).as_dict(),
            gauss_bonnet_terms={"area": area, "boundary": bdy},
            gauss_bonnet_residual=area + bdy - c.chi,
            chi=c.chi,
            hypotheses=check_hypotheses(cfg.spec, u.grid).as_dict(),
            blow_up_candidates=blow_up_candidates(deficit(K, h)).as_dict(),
        )
        if cfg.solver["morse"]:
            report["morse_index_G"] = _morse(cfg, u, c)
    art.json("report.json", report)
    return EXIT_OK


HANDLERS = {
    "solve": cmd_solve,
    "solve-radial": cmd_solve_radial,
    "mountain-pass": cmd_mountain_pass,
    "bubble-scan": cmd_bubble_scan,
    "diagnose": cmd_diagnose,
    "nonexistence-scan": cmd_nonexistence_scan,
    "check-hypotheses": cmd_check_hypotheses,
}


def run(cfg):
    """Execute a validated configuration; returns the exit code.

    Files appear in ``cfg.output_dir`` only if the command finishes.
    """
    out = cfg.output_dir
    with tempfile.TemporaryDirectory(prefix="diskcurvature-") as tmp:
        art = Artifacts(tmp)
        code = HANDLERS[cfg.command](cfg, art)
        art.json("config.json", cfg.raw)
        out.mkdir(parents=True, exist_ok=True)
        for name in art.names:
            shutil.move(str(Path(tmp) / name), str(out / name))
    return code


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _parser():
    p = argparse.ArgumentParser(prog="diskcurvature", description="Prescribed curvature metrics on the unit disk.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path, help="JSON configuration file")
        s.add_argument("--output-dir", type=Path)
        s.add_argument("--grid", type=int, nargs=2, metavar=("N_R", "N_THETA"))
        s.add_argument("--seed", type=int)
        s.add_argument("--tol", type=float, help="residual tolerance")
        s.add_argument("--max-iters", type=int)
        s.add_argument("--method", choices=SOLVER_METHODS)
        s.add_argument("--eps", type=float)
        s.add_argument("--no-morse", action="store_true", help="skip the Morse index")
        s.add_argument("--input", type=Path, help="snapshot to diagnose")
        s.add_argument("--mu", type=float, nargs="+", help="mu schedule for bubble-scan")
    return p


def load_config(args):
    """Merged and validated configuration for parsed arguments."""
    raw = {}
    base_dir = Path(".")
    if args.config is not None:
        try:
            raw = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: invalid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("configuration must be a JSON object")
        base_dir = Path(args.config).parent
    merged = _merge(DEFAULTS, raw)
    merged["command"] = args.command
    if args.output_dir is not None:
        merged["output_dir"] = str(args.output_dir)
    if args.grid is not None:
        merged["grid"] = list(args.grid)
    if args.seed is not None:
        merged["seed"] = args.seed
    if args.tol is not None:
        merged["solver"]["tol_residual"] = args.tol
    if args.max_iters is not None:
        merged["solver"]["max_iters"] = args.max_iters
    if args.method is not None:
        merged["solver"]["method"] = args.method
    if args.eps is not None:
        merged["solver"]["eps"] = args.eps
    if args.no_morse:
        merged["solver"]["morse"] = False
    if args.input is not None:
        merged["input"] = str(args.input)
    if args.mu is not None:
        merged["scan"]["mu_schedule"] = args.mu
    return build_config(merged, base_dir)


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args)
        return run(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (CurvatureError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
