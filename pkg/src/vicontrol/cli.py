"""Command line front end: ``vicontrol {solve,study-h,study-gamma,verify}``.

Configuration is resolved as built-in defaults < ``--config`` JSON file <
command line flags, and written to ``<out>/config.json`` before anything
else runs.  Exit codes: 0 success, 2 configuration, 3 solver, 4 failed
verification, 5 I/O.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis
from .exact import ExactParams, make_exact
from .fem_core import LinearSolveFailure, Mesh
from .forward import NewtonConfig, NonConvergence
from .kkt import ContinuationSchedule, ProblemData, solve_kkt_continuation
from .verify import check_growth_condition, check_strong_stationarity

OUTPUT_ENV = "VICONTROL_OUTPUT_DIR"
DEFAULT_OUT = "vicontrol-out"

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VERIFY, EXIT_IO = 0, 2, 3, 4, 5

log = logging.getLogger("vicontrol")

COMMON_DEFAULTS = {
    "alpha": 11.0 / 528.0,
    "beta": None,  # None: the smallest admissible value
    "m": 1.0,
    "nu": 1.0,
    "eps": 1.0,
    "gamma0": 1.0,
    "gamma_factor": 1.5,
    "gamma_max": 1e20,
    "tol": None,
    "max_iter": 50,
    "format": "csv",
}

COMMAND_DEFAULTS = {
    "solve": {"h": "1/100", "data": None},
    "study-h": {"hs": "1/50,1/100,1/200,1/400,1/800,1/1600"},
    "study-gamma": {"hs": "1/50,1/100,1/200", "gamma_max": 1e16},
    "verify": {"h": "1/400", "seed": 0, "samples": 64, "radius": 0.5, "gamma_oracle": 1e12},
}


class ConfigError(ValueError):
    pass


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vicontrol", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file with any of the options below")
        p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./{DEFAULT_OUT})")
        p.add_argument("--format", choices=("csv", "json"))
        for name in ("alpha", "beta", "m", "nu", "eps", "gamma0", "gamma-factor",
                     "gamma-max", "tol"):
            p.add_argument(f"--{name}", type=float)
        p.add_argument("--max-iter", type=int)
        return p

    s = common(sub.add_parser("solve", help="continuation solve on one mesh"))
    s.add_argument("--h", help="mesh label 1/n (n elements on (-1,1))")
    s.add_argument("--data", help="CSV with columns x,y_d,u_d replacing the exact-solution data")

    s = common(sub.add_parser("study-h", help="mesh refinement study with EOC columns"))
    s.add_argument("--hs", help="comma separated mesh labels, decreasing")

    s = common(sub.add_parser("study-gamma", help="errors along gamma on fixed meshes"))
    s.add_argument("--h", help="single mesh label (overrides --hs)")
    s.add_argument("--hs", help="comma separated mesh labels")

    s = common(sub.add_parser("verify", help="stationarity and growth-condition checks"))
    s.add_argument("--h", help="mesh label for the growth-condition samples")
    s.add_argument("--seed", type=int)
    s.add_argument("--samples", type=int)
    s.add_argument("--radius", type=float)
    s.add_argument("--gamma-oracle", type=float)
    return ap


_FLOATS = ("alpha", "beta", "m", "nu", "eps", "gamma0", "gamma_factor", "gamma_max", "tol",
           "radius", "gamma_oracle")
_INTS = ("max_iter", "seed", "samples")


def resolve_config(args: argparse.Namespace) -> dict:
    """Merge defaults, the optional JSON file and explicit flags."""
    cmd = args.command
    cfg = dict(COMMON_DEFAULTS)
    cfg.update(COMMAND_DEFAULTS[cmd])
    if cmd == "study-gamma":
        cfg["h"] = None
    from_file = _read_config(args.config, cmd, set(cfg) | {"out"}) if args.config else {}
    cfg.update(from_file)
    flags = {k: v for k, v in vars(args).items()
             if v is not None and k not in ("command", "config", "verbose")}
    cfg.update(flags)
    if cmd == "study-gamma":
        h = cfg.pop("h")
        if h:
            cfg["hs"] = h
    for key in _FLOATS + _INTS:
        if cfg.get(key) is not None:
            try:
                cfg[key] = (float if key in _FLOATS else int)(cfg[key])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{key}: {exc}") from exc
    cfg["out"] = str(cfg.get("out") or os.environ.get(OUTPUT_ENV) or DEFAULT_OUT)
    if cfg["beta"] is None:
        cfg["beta"] = 0.5 * cfg["m"] * (68.0 * cfg["alpha"] + math.sqrt(2.0) * cfg["eps"] + 4.0)
    cfg["command"] = cmd
    cfg["sources"] = {"config_file": args.config, "file_keys": sorted(from_file),
                      "flags": sorted(flags)}
    return cfg


def _read_config(path: str, cmd: str, allowed: set) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"config file {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    raw = {k.replace("-", "_"): v for k, v in raw.items()}
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"unknown config keys for {cmd}: {', '.join(unknown)}")
    return raw


def _exact(cfg):
    if not cfg["nu"] > 0:
        raise ConfigError(f"nu must be positive (got {cfg['nu']})")
    params = ExactParams(alpha=cfg["alpha"], beta=cfg["beta"], m=cfg["m"], nu=cfg["nu"],
                         eps=cfg["eps"])
    try:
        return make_exact(params)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _mesh(label: str) -> Mesh:
    try:
        return Mesh.from_label(analysis.parse_h(label))
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"--h {label}: {exc}") from exc


def _hs(text: str) -> list[float]:
    items = [s for s in str(text).split(",") if s.strip()]
    if not items:
        raise ConfigError("empty mesh list")
    out = []
    for s in items:
        out.append(_mesh(s).label)
    return out


def _newton(cfg) -> NewtonConfig:
    try:
        return NewtonConfig(abs_tol=cfg["tol"], max_iter=cfg["max_iter"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _schedule(cfg) -> ContinuationSchedule:
    try:
        return ContinuationSchedule(cfg["gamma0"], cfg["gamma_factor"], cfg["gamma_max"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _user_data(path: str, nu: float) -> ProblemData:
    try:
        table = np.genfromtxt(path, delimiter=",", names=True)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    names = table.dtype.names or ()
    if not {"x", "y_d", "u_d"} <= set(names):
        raise ConfigError(f"{path}: need columns x,y_d,u_d (found {', '.join(names)})")
    x = np.atleast_1d(table["x"])
    if len(x) < 2 or np.any(np.diff(x) <= 0):
        raise ConfigError(f"{path}: x must be strictly increasing with at least two rows")
    yd, ud = np.atleast_1d(table["y_d"]), np.atleast_1d(table["u_d"])
    return ProblemData(lambda s: np.interp(s, x, yd), lambda s: np.interp(s, x, ud), nu,
                       tuple(x[(x > -1) & (x < 1)]))


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def cmd_solve(cfg, out: Path) -> int:
    mesh = _mesh(cfg["h"])
    exact = _exact(cfg)
    data = ProblemData.from_exact(exact) if not cfg["data"] else _user_data(cfg["data"], cfg["nu"])
    state = solve_kkt_continuation(data, _schedule(cfg), mesh, _newton(cfg))
    sol = analysis._nodal(state)
    stem = f"solution_n{mesh.n_elements}"
    if cfg["format"] == "json":
        _dump(out / f"{stem}.json", {k: np.asarray(v).tolist() for k, v in vars(sol).items()})
    else:
        analysis.write_nodal(out / f"{stem}.csv", sol)
    summary = {
        "h": mesh.label,
        "n_elements": mesh.n_elements,
        "gamma": state.gamma,
        "converged": all(r.converged for r in state.history),
        "steps": [{"gamma": r.gamma, "iterations": r.iterations,
                   "final_residual": r.final_residual, "tolerance": r.tolerance,
                   "backtracks": r.backtrack_total, "fallback_steps": r.fallback_steps}
                  for r in state.history],
    }
    if not cfg["data"]:
        e_y, e_p, e_u = analysis.measure_errors(state, exact)
        summary["errors"] = {"e_y": e_y, "e_p": e_p, "e_u": e_u}
    _dump(out / "summary.json", summary)
    print(f"solve h=1/{mesh.n_elements}: {len(state.history)} gamma steps, "
          f"final gamma {state.gamma:.3g}, converged={summary['converged']}")
    return EXIT_OK


def cmd_study_h(cfg, out: Path) -> int:
    exact = _exact(cfg)
    table = analysis.run_h_study(ProblemData.from_exact(exact), exact, _hs(cfg["hs"]),
                                 _schedule(cfg), _newton(cfg))
    paths = analysis.emit_results(table, out / f"eoc_table.{cfg['format']}", cfg["format"])
    print((out / "eoc_table.csv").read_text() if cfg["format"] == "csv" else f"wrote {paths[0]}")
    return EXIT_OK


def cmd_study_gamma(cfg, out: Path) -> int:
    exact = _exact(cfg)
    gammas = _schedule(cfg).gammas()
    study = analysis.run_gamma_study(ProblemData.from_exact(exact), exact, _hs(cfg["hs"]),
                                     gammas, _newton(cfg))
    analysis.emit_results(study, out / f"gamma_study.{cfg['format']}", cfg["format"])
    for h in study.series:
        e = study.errors(h)
        change = abs(e[-1] / e[-2] - 1.0) if len(e) > 1 else float("nan")
        print(f"h=1/{round(1 / h)}: e_y plateau {e[-1]:.4e}, last-two relative change {change:.2e}")
    return EXIT_OK


def cmd_verify(cfg, out: Path) -> int:
    exact = _exact(cfg)
    if cfg["samples"] < 1:
        raise ConfigError("samples must be a positive integer")
    mesh = _mesh(cfg["h"])
    stat = check_strong_stationarity(exact)
    try:
        growth = check_growth_condition(exact, mesh, cfg["gamma_oracle"], cfg["samples"],
                                        cfg["radius"], cfg["seed"], _newton(cfg))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    report = {"stationarity": vars(stat), "growth": growth.to_dict(),
              "negative_state_samples": growth.negative_state_samples}
    _dump(out / "verify_report.json", report)
    print(f"stationarity: {'pass' if stat.passed else 'FAIL'} "
          f"(max residual {max(stat.max_state_residual, stat.max_adjoint_residual, stat.gradient_residual):.2e})")
    print(f"growth: {'pass' if growth.passed else 'FAIL'} (min total {growth.min_total:.3e}, "
          f"{growth.negative_state_samples} samples with y(0) < 0)")
    return EXIT_OK if stat.passed and growth.passed else EXIT_VERIFY


COMMANDS = {"solve": cmd_solve, "study-h": cmd_study_h, "study-gamma": cmd_study_gamma,
            "verify": cmd_verify}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        _dump(out / "config.json", cfg)
        return COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonConvergence, LinearSolveFailure) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
