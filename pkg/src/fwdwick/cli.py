"""Command line front end: ``fwdwick {kernels,simulate,verify-ito,convergence}``.

Settings come from three layers, later ones winning: built-in defaults, a
flat ``key=value`` file given with ``--config``, and command-line flags.
Outputs go to ``--out`` (default: ``$FWDWICK_OUT`` or ``./fwdwick-out``).

Exit codes: 0 pass, 1 acceptance failure, 2 configuration error,
3 numerical-budget violation.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._backend import BACKEND
from .errors import BudgetError, ConfigError, FwdWickError
from .frac_ops import check_hurst, constants
from .functions import parse_function
from .ito_engine import ExperimentConfig, ito_formula_check, trace_limit_checks
from .kernels import K1, K2, K2_unit_closed, kappa3
from .noise_grid import make_graded_grid, make_grid, required_left_cut, tail_bound
from .processes import exact_grid_variance, fbm_exact_oracle, make_rep, moment_rows, path_batch

OUT_ENV = "FWDWICK_OUT"
EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_BUDGET = 0, 1, 2, 3

DEFAULTS = {
    "hurst": 0.7,
    "process": "fbm",
    "f": "x2",
    "a": 0.25,
    "b": 1.0,
    "eps-ladder": "0.2,0.1,0.05,0.025",
    "cells": None,
    "left-cut": None,
    "spacing": 1.0 / 640.0,
    "tail-budget": 1e-4,
    "time-points": "0.2,0.4,0.6,0.8,1.0",
    "replicates": None,
    "seed": 20240917,
    "workers": 1,
    "chunk": 250,
}
DEFAULT_REPLICATES = {"simulate": 20000, "verify-ito": 5000, "convergence": 2000}

FLOAT_KEYS = {"hurst", "a", "b", "left-cut", "spacing", "tail-budget"}
INT_KEYS = {"cells", "replicates", "seed", "workers", "chunk"}


def fmt(x) -> str:
    """Numbers with 17 significant digits; everything else via str."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return "" if x is None else str(x)


def parse_config_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key=value")
        k, v = (s.strip() for s in line.split("=", 1))
        k = k.replace("_", "-")
        if k not in DEFAULTS:
            raise ConfigError(f"{path}:{n}: unknown key {k!r}")
        out[k] = v
    return out


def _coerce(key, value):
    if value is None:
        return None
    try:
        if key in FLOAT_KEYS:
            v = float(value)
            if not math.isfinite(v):
                raise ValueError
            return v
        if key in INT_KEYS:
            return int(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc
    return str(value)


def resolve_settings(args, command: str) -> dict:
    settings = dict(DEFAULTS)
    settings["replicates"] = DEFAULT_REPLICATES.get(command)
    if getattr(args, "config", None):
        settings.update(parse_config_file(args.config))
    for key in DEFAULTS:
        val = getattr(args, key.replace("-", "_"), None)
        if val is not None:
            settings[key] = val
    return {k: _coerce(k, v) for k, v in settings.items()}


def float_list(text) -> tuple:
    try:
        vals = tuple(float(v) for v in str(text).split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"bad number list {text!r}") from exc
    if not vals:
        raise ConfigError("empty number list")
    return vals


# -------------------------------------------------------------- output


class Run:
    """Output directory, manifest hash and byte-stable CSV writing."""

    def __init__(self, command, settings, out_dir):
        self.command = command
        self.settings = settings
        self.out = Path(out_dir or os.environ.get(OUT_ENV) or "fwdwick-out")
        self.out.mkdir(parents=True, exist_ok=True)
        snap = {"command": command, "settings": {k: fmt(v) for k, v in sorted(settings.items())},
                "version": __version__}
        self.hash = hashlib.sha256(json.dumps(snap, sort_keys=True).encode()).hexdigest()[:16]
        self.snapshot = snap
        self.started = _dt.datetime.now(_dt.timezone.utc).isoformat()
        self.files = []

    def write_csv(self, name, header, rows):
        buf = io.StringIO()
        buf.write(f"# fwdwick {self.command} manifest={self.hash}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(r.get(h)) for h in header])
        p = self.out / name
        p.write_bytes(buf.getvalue().encode())
        self.files.append(str(p))
        return p

    def write_json(self, name, obj):
        p = self.out / name
        p.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")
        self.files.append(str(p))
        return p

    def finish(self, status):
        manifest = dict(self.snapshot, hash=self.hash, backend=BACKEND, started=self.started,
                        finished=_dt.datetime.now(_dt.timezone.utc).isoformat(), outputs=self.files,
                        status=status)
        self.write_json(f"{self.command}-manifest.json", manifest)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.bool_):
        return bool(o)
    return str(o)


def _emit(args, payload):
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True, default=_json_default))


# -------------------------------------------------------------- commands


def cmd_kernels(args, settings):
    H = check_hurst(settings["hurst"])
    run = Run("kernels", {"hurst": H}, args.out)
    cs = constants(H)
    r1, r2 = cs.identity_residuals()
    rows = [
        {"name": "A", "value": cs.A}, {"name": "d", "value": cs.d},
        {"name": "B", "value": cs.B}, {"name": "C", "value": cs.C},
        {"name": "kappa3", "value": cs.kappa3, "reference": kappa3(H, "closed"),
         "residual": abs(cs.kappa3 / kappa3(H, "closed") - 1), "tol": 1e-8},
        {"name": "identity_A", "value": r1, "reference": 0.0, "residual": r1, "tol": 1e-10},
        {"name": "identity_d", "value": r2, "reference": 0.0, "residual": r2, "tol": 1e-10},
    ]
    for t in (0.5, 1.0, 2.0):
        v = K1(H, t, t, t)
        ref = t ** (2 * H - 1) / (2 * H - 1)
        rows.append({"name": f"K1_diag_t={t:g}", "value": v, "reference": ref, "residual": abs(v / ref - 1),
                     "tol": 1e-8})
    v = K2(H, 1.0, 1.0, 1.0)
    ref = K2_unit_closed(H)
    rows.append({"name": "K2_unit", "value": v, "reference": ref, "residual": abs(v / ref - 1), "tol": 1e-8})
    for r in rows:
        if "tol" in r:
            r["pass"] = r["residual"] < r["tol"]
    header = ["name", "value", "reference", "residual", "tol", "pass"]
    run.write_csv("kernels.csv", header, rows)
    ok = all(r.get("pass", True) for r in rows)
    run.finish("pass" if ok else "fail")
    _emit(args, {"hurst": H, "rows": rows, "identity_residuals": [r1, r2], "passed": ok, "manifest": run.hash})
    if not args.json:
        sys.stdout.write(run.out.joinpath("kernels.csv").read_text())
    return EXIT_OK if ok else EXIT_FAIL


def _build_grid(settings, process, t_max):
    H = settings["hurst"]
    budget = settings["tail-budget"]
    if settings["cells"] is not None:
        if settings["left-cut"] is None:
            raise ConfigError("--cells needs --left-cut")
        L = settings["left-cut"]
        grid = make_grid(L, max(t_max, 1.0) + 0.5, settings["cells"])
    else:
        L = settings["left-cut"] if settings["left-cut"] is not None else required_left_cut(H, process, budget, t_max)
        grid = make_graded_grid(settings["spacing"], math.ceil(t_max), L)
    bound = tail_bound(H, process, L, t_max)
    if bound > budget * (1 + 1e-9):
        raise BudgetError(f"tail bound {bound:.6g} at left cut {L:.6g} exceeds the budget {budget:.6g}", bound=bound)
    return grid, bound


def cmd_simulate(args, settings):
    H = check_hurst(settings["hurst"])
    process = settings["process"]
    if process not in ("fbm", "rosenblatt"):
        raise ConfigError(f"unknown process {process!r}")
    times = np.array(sorted(set(float_list(settings["time-points"]))))
    if np.any(times <= 0):
        raise ConfigError("time points must be positive")
    R = settings["replicates"]
    if R is None or R < 3:
        raise ConfigError("need at least 3 replicates")
    grid, bound = _build_grid(settings, process, float(times.max()))
    run = Run("simulate", dict(settings, oracle=args.oracle, dump_paths=args.dump_paths), args.out)
    rep = make_rep(process, H, grid, times)
    paths = path_batch(rep, settings["seed"], R, chunk=settings["chunk"])
    k3 = constants(H).kappa3 if process == "rosenblatt" else None
    rows = [dict(r, source="grid") for r in moment_rows(paths, times, H, process, k3)]
    exact = exact_grid_variance(rep)
    # exact grid variances; only the final time is graded (2% grid-bias budget)
    for t, v in zip(times, exact):
        ok = abs(v - t ** (2 * H)) < 0.02 * t ** (2 * H) if t == times[-1] else None
        rows.append({"source": "grid_exact", "stat": "var", "s": t, "t": t, "value": v, "se": 0.0,
                     "target": t ** (2 * H), "pass": ok})
    if args.oracle:
        if process != "fbm":
            raise ConfigError("--oracle is available for fbm only")
        orc = fbm_exact_oracle(H, times, settings["seed"], R)
        rows += [dict(r, source="oracle") for r in moment_rows(orc, times, H, "fbm")]
    header = ["source", "stat", "s", "t", "value", "se", "target", "pass"]
    run.write_csv("simulate.csv", header, rows)
    if args.dump_paths:
        prow = ({"replicate": r, "t": t, "value": paths[r, k]} for r in range(R) for k, t in enumerate(times))
        run.write_csv("paths.csv", ["replicate", "t", "value"], prow)
    ok = all(r["pass"] for r in rows if r["pass"] is not None)
    run.finish("pass" if ok else "fail")
    _emit(args, {"rows": rows, "tail_bound": bound, "cells": grid.cell_count, "passed": ok, "manifest": run.hash})
    if not args.json:
        print(f"simulate {process}: {len(rows)} rows, cells={grid.cell_count}, tail bound={bound:.3g}, "
              f"{'pass' if ok else 'FAIL'} -> {run.out / 'simulate.csv'}")
    return EXIT_OK if ok else EXIT_FAIL


def experiment_config(settings) -> ExperimentConfig:
    eps = float_list(settings["eps-ladder"])
    kw = dict(
        H=settings["hurst"], process=settings["process"], F=settings["f"], a=settings["a"], b=settings["b"],
        eps_ladder=eps, replicates=settings["replicates"], seed=settings["seed"],
        tail_budget=settings["tail-budget"], workers=settings["workers"], chunk=settings["chunk"],
    )
    if settings["cells"] is not None:
        kw.update(grid="uniform", cells=settings["cells"], left_cut=settings["left-cut"])
    elif settings["left-cut"] is not None:
        kw.update(left_cut=settings["left-cut"])
    cfg = ExperimentConfig(**kw).validate()
    if cfg.process == "rosenblatt" or cfg.left_cut is not None:
        bound = tail_bound(cfg.H, cfg.process, cfg.resolved_left_cut(), max(cfg.b, 1e-12))
        if bound > cfg.tail_budget * (1 + 1e-9):
            raise BudgetError(f"tail bound {bound:.6g} exceeds the budget {cfg.tail_budget:.6g}", bound=bound)
    return cfg


def cmd_verify_ito(args, settings):
    check_hurst(settings["hurst"])
    parse_function(settings["f"])
    cfg = experiment_config(settings)
    run = Run("verify-ito", settings, args.out)

    def progress(r):
        if not args.json:
            print(f"  eps={r.eps:g} cells={r.cells} rel_rms={r.rel_rms:.4g} ({r.seconds:.1f}s)", flush=True)

    report = ito_formula_check(cfg, progress=progress)
    rows = []
    for j, r in enumerate(report.rungs):
        base = {"rung": j, "eps": r.eps, "dt": r.dt, "spacing": r.spacing, "cells": r.cells, "nodes": r.nodes}
        rows.append(dict(base, term="lhs", mean=r.mean_lhs, se=r.se_lhs))
        rows.append(dict(base, term="rhs", mean=r.mean_rhs, se=r.se_rhs))
        for name, st in r.terms.items():
            rows.append(dict(base, term=name, mean=st["mean"], se=st["se"], var=st["var"]))
        rows.append(dict(base, term="lhs_minus_rhs", rms=r.rms, se=r.rms_se, rel_rms=r.rel_rms))
        rows.append(dict(base, term="forward_minus_rhs", rms=r.rms_fwd, rel_rms=r.rel_rms_fwd))
    header = ["rung", "eps", "dt", "spacing", "cells", "nodes", "term", "mean", "se", "var", "rms", "rel_rms"]
    run.write_csv("verify-ito.csv", header, rows)
    summary = {"checks": report.checks, "passed": report.passed, "failures": report.failures(),
               "seconds": [r.seconds for r in report.rungs], "manifest": run.hash}
    run.write_json("verify-ito-summary.json", summary)
    run.finish("pass" if report.passed else "fail")
    _emit(args, summary)
    if not args.json:
        status = "pass" if report.passed else "FAIL: " + ", ".join(report.failures())
        print(f"verify-ito {cfg.process} {cfg.F}: {status}")
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_convergence(args, settings):
    check_hurst(settings["hurst"])
    s = dict(settings, process="rosenblatt")
    cfg = experiment_config(s)
    run = Run("convergence", s, args.out)
    out = trace_limit_checks(cfg, replicates=cfg.replicates)
    rows = []
    for item in ("fbm", "K1", "K2", "e_l2"):
        for j, e in enumerate(out["eps"]):
            row = {"item": item, "eps": e, "gap": out[item]["gap"][j]}
            if item == "e_l2":
                row.update(quadrature=out[item]["quadrature"][j], mc=out[item]["mc"][j], mc_se=out[item]["mc_se"][j])
            rows.append(row)
    run.write_csv("convergence.csv", ["item", "eps", "gap", "quadrature", "mc", "mc_se"], rows)
    summary = {k: v for k, v in out.items()}
    summary["manifest"] = run.hash
    run.write_json("convergence-summary.json", summary)
    run.finish("pass" if out["pass"] else "fail")
    _emit(args, summary)
    if not args.json:
        for item in ("fbm", "K1", "K2", "e_l2"):
            g = out[item]["gap"]
            print(f"  {item:5s} gaps " + " ".join(f"{x:.4g}" for x in g) + ("" if out[item]["pass"] else "  FAIL"))
    return EXIT_OK if out["pass"] else EXIT_FAIL


# -------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value file; flags override it")
    common.add_argument("--hurst", type=float)
    common.add_argument("--process", choices=["fbm", "rosenblatt"])
    common.add_argument("--f", help="x2 | x3 | poly:c0,c1,... | expsq:lambda")
    common.add_argument("--a", type=float)
    common.add_argument("--b", type=float)
    common.add_argument("--eps-ladder", help="comma separated, decreasing")
    common.add_argument("--cells", type=int, help="uniform grid cell count (with --left-cut)")
    common.add_argument("--left-cut", type=float)
    common.add_argument("--spacing", type=float, help="core cell width of the graded grid")
    common.add_argument("--tail-budget", type=float)
    common.add_argument("--time-points", help="comma separated times")
    common.add_argument("--replicates", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("--chunk", type=int)
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./fwdwick-out)")
    common.add_argument("--json", action="store_true", help="print a JSON summary on stdout")

    p = argparse.ArgumentParser(prog="fwdwick", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"fwdwick {__version__} ({BACKEND})")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("kernels", parents=[common], help="constants and kernel closed-form checks")
    sp = sub.add_parser("simulate", parents=[common], help="moment, covariance and cumulant checks")
    sp.add_argument("--oracle", action="store_true", help="add exact-covariance fBm paths side by side")
    sp.add_argument("--dump-paths", action="store_true", help="also write paths.csv")
    sub.add_parser("verify-ito", parents=[common], help="Itô formula ladder")
    sub.add_parser("convergence", parents=[common], help="trace-term limits along the eps ladder")
    return p


COMMANDS = {"kernels": cmd_kernels, "simulate": cmd_simulate, "verify-ito": cmd_verify_ito,
            "convergence": cmd_convergence}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        settings = resolve_settings(args, args.command)
        return COMMANDS[args.command](args, settings)
    except BudgetError as exc:
        print(f"fwdwick: numerical budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (ConfigError, ValueError) as exc:
        print(f"fwdwick: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FwdWickError as exc:
        print(f"fwdwick: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
