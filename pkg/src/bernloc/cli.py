"""Command-line front end.

    bernloc eval       --f SPEC --n N --x X [--k K --w LAW]
    bernloc bounds     --n N --x X --threshold T --side upper|lower
    bernloc verify     --f SPEC --a A --b B --c C --x X --n N [--k K --w LAW]
    bernloc decay      --f SPEC --a A --b B --c C --x X --n GRID
    bernloc experiment sharpness|boundary|herzog-hill|dloc ...
    bernloc --config run.json

Grids accept ``4``, ``100,200,400`` or ``start:stop:step`` (stop inclusive).
Every table starts with ``#`` metadata lines (version, command, config
echo, seed). Floats are printed with 17 significant digits and log-space
quantities as separate sign / log columns. Exit status is 2 for bad input,
1 when a ``verify`` row fails, 0 otherwise.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import Optional, Sequence

from . import __version__
from .experiments import (
    boundary_run,
    decay_fit,
    dloc_run,
    herzog_hill_run,
    kantorovich_check,
    locally_constant_check,
    sharpness_run,
)
from .functions import SpecError, load_function_spec
from .numerics import LogValue
from .operators import (
    DEFAULT_SAMPLES,
    DEFAULT_SEED,
    OperatorParams,
    PerturbationSpec,
    PreconditionError,
    kantorovich_eval,
)
from .tails import TailQuery, bound_report
from .quadrature import QuadratureError

COLUMNS = {
    "eval": ["n", "x", "k", "value"],
    "bounds": ["n", "x", "threshold", "side", "exact_sign", "exact_log", "chernoff_log",
               "ferrante_log", "ferrante_applicable", "kl_rate"],
    "verify": ["n", "x", "a", "b", "c", "error_log", "bound_log", "holds", "slack"],
    "decay": ["n_grid", "neg_log_errors", "slope", "intercept", "max_residual", "fit_points"],
    "sharpness": ["N", "exact_log", "asymptotic_log", "ratio", "printed_ratio"],
    "boundary": ["n", "scaled", "symmetry_gap", "limit_constant"],
    "herzog-hill": ["n", "value", "offset"],
    "dloc": ["n", "log_error", "paper_lower_bound", "sublinearity", "above_lower_bound"],
}


class UsageError(Exception):
    pass


def _grid(text: str, cast=int) -> list:
    text = str(text).strip()
    try:
        if ":" in text:
            parts = [cast(p) for p in text.split(":")]
            if len(parts) != 3 or parts[2] <= 0:
                raise ValueError
            start, stop, step = parts
            out, v, i = [], start, 0
            while v <= stop + (1e-12 if cast is float else 0):
                out.append(v)
                i += 1
                v = start + i * step
        else:
            out = [cast(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}") from None
    if not out:
        raise argparse.ArgumentTypeError(f"empty grid {text!r}")
    if any(b <= a for a, b in zip(out, out[1:])):
        raise argparse.ArgumentTypeError(f"grid {text!r} is not strictly increasing")
    return out


def _int_grid(text):
    return _grid(text, int)


def _float_grid(text):
    return _grid(text, float)


def _law(text: str) -> PerturbationSpec:
    text = text.strip().lower()
    if text in ("irwin-hall", "irwin_hall", "uniform-sum"):
        return PerturbationSpec.irwin_hall()
    if text.startswith("point:"):
        try:
            return PerturbationSpec.point_mass(float(text.split(":", 1)[1]))
        except ValueError:
            pass
    raise argparse.ArgumentTypeError(f"unknown perturbation law {text!r} (irwin-hall or point:W)")


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return ""
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return format(v, ".17g")
    if isinstance(v, (list, tuple)):
        return ";".join(_fmt(e) for e in v)
    return str(v)


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return format(v)
    if isinstance(v, (list, tuple)):
        return [_json_value(e) for e in v]
    return v


def _add_output(p):
    p.add_argument("--format", choices=["csv", "json"], default="csv", help="output format (default csv)")
    p.add_argument("--output", default="-", help="output path, '-' for standard output")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="Monte Carlo seed, echoed in the header")


def _add_f(p):
    p.add_argument("--f", required=True, help="function spec text, or a path to a .txt/.json spec file")


def _add_region(p):
    p.add_argument("--a", type=float, required=True, help="left end of the constant region")
    p.add_argument("--b", type=float, required=True, help="right end of the constant region")
    p.add_argument("--c", type=float, required=True, help="the constant value of f on (a, b)")


def _add_kantorovich(p):
    p.add_argument("--k", type=int, default=0, help="perturbation size k (0 = plain Bernstein)")
    p.add_argument("--w", type=_law, default=PerturbationSpec.irwin_hall(),
                   help="law of W_k: irwin-hall (default) or point:W")
    p.add_argument("--samples", type=int, default=DEFAULT_SAMPLES, help="Monte Carlo sample count")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bernloc", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"bernloc {__version__}")
    parser.add_argument("--config", help="JSON file with 'command' and flag values")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("eval", help="evaluate B_n f(x) or L_{n,k} f(x)")
    _add_f(p)
    p.add_argument("--n", type=_int_grid, required=True, help="degree n or n-grid")
    p.add_argument("--x", type=_float_grid, required=True, help="point x or x-grid")
    _add_kantorovich(p)
    _add_output(p)

    p = sub.add_parser("bounds", help="exact binomial tail vs Chernoff and Ferrante bounds")
    p.add_argument("--n", type=_int_grid, required=True, help="n or n-grid")
    p.add_argument("--x", type=_float_grid, required=True, help="success probability or grid")
    p.add_argument("--threshold", type=_float_grid, required=True, help="threshold fraction of n, or grid")
    p.add_argument("--side", choices=["upper", "lower"], default="upper", help="tail side (default upper)")
    _add_output(p)

    p = sub.add_parser("verify", help="check the locally-constant error bound")
    _add_f(p)
    _add_region(p)
    p.add_argument("--x", type=_float_grid, required=True, help="point x or x-grid inside (a, b)")
    p.add_argument("--n", type=_int_grid, required=True, help="degree n or n-grid")
    _add_kantorovich(p)
    _add_output(p)

    p = sub.add_parser("decay", help="fit the exponential decay rate of the error")
    _add_f(p)
    _add_region(p)
    p.add_argument("--x", type=float, required=True, help="point x inside (a, b)")
    p.add_argument("--n", type=_int_grid, required=True, help="n-grid, at least 4 points")
    p.add_argument("--all-points", action="store_true", help="fit every point instead of the top half")
    _add_output(p)

    p = sub.add_parser("experiment", help="run a named experiment")
    p.add_argument("name", choices=["sharpness", "boundary", "herzog-hill", "dloc"])
    p.add_argument("--n", type=_int_grid, required=True, help="n-grid")
    p.add_argument("--k", type=int, default=1, help="sharpness: numerator of b = k/m")
    p.add_argument("--m", type=int, default=2, help="sharpness: denominator of b = k/m")
    p.add_argument("--x", type=float, default=0.3, help="sharpness: point x < k/m")
    p.add_argument("--s", type=float, default=1.0, help="boundary: exponent s of (t - 1/2)_+^s")
    p.add_argument("--b", type=float, default=0.5, help="herzog-hill: jump location b")
    p.add_argument("--alpha", type=float, default=0.5, help="dloc: cusp exponent alpha in (0, 1)")
    _add_output(p)
    return parser


def _config_argv(path: str) -> list:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path!r}: {exc}") from None
    if not isinstance(doc, dict) or "command" not in doc:
        raise UsageError(f"config {path!r} must be a JSON object with a 'command' key")
    argv = [str(doc["command"])]
    if "name" in doc:
        argv.append(str(doc["name"]))
    for key, value in doc.items():
        if key in ("command", "name"):
            continue
        flag = "--" + key.replace("_", "-")
        if isinstance(value, bool):
            if value:
                argv.append(flag)
            continue
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        argv += [flag, str(value)]
    return argv


# -- commands ---------------------------------------------------------------------

def _cmd_eval(args):
    f = load_function_spec(args.f)
    rows = []
    for n in args.n:
        for x in args.x:
            params = OperatorParams(n, args.k, x)
            rows.append([n, x, args.k, kantorovich_eval(f, params, args.w, args.samples, args.seed)])
    return rows, False


def _cmd_bounds(args):
    rows = []
    for n in args.n:
        for x in args.x:
            for th in args.threshold:
                rep = bound_report(TailQuery(n, x, th, args.side))
                rows.append([n, x, th, args.side, rep.exact.sign, rep.exact.log_mag, rep.chernoff.log_mag,
                             rep.ferrante.log_mag if rep.ferrante is not None else None,
                             rep.ferrante_applicable, rep.kl_rate])
    return rows, False


def _check(args, f, n, x):
    if args.k:
        return kantorovich_check(f, args.c, args.a, args.b, OperatorParams(n, args.k, x), args.w)
    return locally_constant_check(f, args.c, args.a, args.b, n, x)


def _cmd_verify(args):
    f = load_function_spec(args.f)
    rows, failed = [], False
    for n in args.n:
        for x in args.x:
            ch = _check(args, f, n, x)
            failed |= not ch.holds
            rows.append([n, x, args.a, args.b, args.c, ch.error.log_mag, ch.bound.log_mag, ch.holds, ch.slack])
    return rows, failed


def _cmd_decay(args):
    f = load_function_spec(args.f)
    checks = [locally_constant_check(f, args.c, args.a, args.b, n, args.x) for n in args.n]
    fit = decay_fit(checks, top_half=not args.all_points)
    return [[list(fit.n_grid), list(fit.neg_log_errors), fit.slope, fit.intercept,
             fit.max_residual, fit.fit_points]], False


def _cmd_experiment(args):
    if args.name == "sharpness":
        return [[r.N, r.exact.log_mag, r.asymptotic.log_mag, r.ratio, r.printed_ratio]
                for r in sharpness_run(args.k, args.m, args.x, args.n)], False
    if args.name == "boundary":
        run = boundary_run(args.s, args.n)
        return [[n, scaled, gap, run.limit_constant] for n, scaled, gap in run.rows], False
    if args.name == "herzog-hill":
        return [[n, v, v - 0.5] for n, v in herzog_hill_run(args.b, args.n)], False
    return [[r.n, r.log_error, r.paper_lower_bound, r.sublinearity, r.log_error >= r.paper_lower_bound]
            for r in dloc_run(args.alpha, args.n)], False


_COMMANDS = {
    "eval": _cmd_eval,
    "bounds": _cmd_bounds,
    "verify": _cmd_verify,
    "decay": _cmd_decay,
    "experiment": _cmd_experiment,
}


_EXPERIMENT_FLAGS = {
    "sharpness": ("k", "m", "x"),
    "boundary": ("s",),
    "herzog-hill": ("b",),
    "dloc": ("alpha",),
}


def _config_echo(args) -> dict:
    out = {}
    skip = {"format", "output", "config"}
    if args.command == "experiment":
        skip |= {"k", "m", "x", "s", "b", "alpha"} - set(_EXPERIMENT_FLAGS[args.name])
    for key, value in sorted(vars(args).items()):
        if key in skip:
            continue
        if isinstance(value, PerturbationSpec):
            value = "irwin-hall" if value.kind == "irwin_hall" else f"point:{value.w!r}"
        out[key] = value
    return out


def render(args, rows) -> str:
    table = args.name if args.command == "experiment" else args.command
    columns = COLUMNS[table]
    meta = {"tool": f"bernloc {__version__}", "command": table, "config": _config_echo(args), "seed": args.seed}
    if args.format == "json":
        doc = {"meta": meta, "columns": columns,
               "rows": [[_json_value(v) for v in row] for row in rows]}
        return json.dumps(doc, indent=2, sort_keys=False, allow_nan=False) + "\n"
    buf = io.StringIO()
    buf.write(f"# tool: {meta['tool']}\n")
    buf.write(f"# command: {table}\n")
    buf.write(f"# config: {json.dumps(_json_value_tree(meta['config']), sort_keys=True)}\n")
    buf.write(f"# seed: {args.seed}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _json_value_tree(cfg: dict) -> dict:
    return {k: _json_value(v) for k, v in cfg.items()}


def run(argv: Optional[Sequence[str]] = None) -> tuple:
    """Parse ``argv`` and run; returns ``(exit_status, text)``."""
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    if args.config:
        extra = [a for a in argv if a not in ("--config", args.config)]
        args = parser.parse_args(_config_argv(args.config) + extra)
        args.config = None
    if not args.command:
        raise UsageError("a command is required (eval, bounds, verify, decay, experiment)")
    rows, failed = _COMMANDS[args.command](args)
    text = render(args, rows)
    if args.output == "-":
        sys.stdout.write(text)
    else:
        with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return (1 if failed else 0), text


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        status, _ = run(argv)
    except SystemExit as exc:  # argparse: --help, --version, bad flags
        return exc.code if isinstance(exc.code, int) else 2
    except (UsageError, SpecError, PreconditionError, QuadratureError, ValueError) as exc:
        print(f"bernloc: error: {exc}", file=sys.stderr)
        return 2
    return status


if __name__ == "__main__":
    sys.exit(main())
