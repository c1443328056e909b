"""Command-line front end.

Exit codes: 0 success, 1 usage or input error, 2 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import re
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import experiments as ex
from .composite_saddle import (
    Exponential,
    Normal,
    Uniform,
    UncertainDesign,
    convolution_oracle_pdf,
    saddle_point,
    sum_cgf,
)
from .errors import ConfigError, NoConvergence, SaddleMLEError, TlsDegenerate
from .estimators import FitOptions, aml_fit, ols, tls
from .plots import histogram, line_chart

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2

MODEL_NAMES = {
    "rounding": ex.ROUNDING,
    "float": ex.FLOATING_POINT,
    "clipping": ex.EXP_CLIPPING,
    "gaussian": ex.GAUSSIAN_DESIGN,
}


class InputError(Exception):
    pass


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def read_csv_matrix(path):
    """Numeric CSV with a mandatory header row; returns a 2-d float array."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    if len(rows) < 2:
        raise InputError(f"{path}: need a header row and at least one data row")
    width = len(rows[0])
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != width:
            raise InputError(f"{path}:{lineno}: expected {width} fields, got {len(row)}")
        try:
            data.append([float(v) for v in row])
        except ValueError:
            raise InputError(f"{path}:{lineno}: unparsable number") from None
    arr = np.array(data, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{path}: non-finite values")
    return arr


def half_unit_last_digit(H, digits):
    """Half a unit in the last of ``digits`` significant figures of each entry."""
    a = np.abs(np.asarray(H, dtype=float))
    with np.errstate(divide="ignore"):
        e = np.floor(np.log10(np.where(a > 0, a, 1.0)) + 1e-12)
    return np.where(a > 0, 0.5 * 10.0 ** (e - digits + 1), 0.0)


def _build_design(args, H):
    need = {"rounding": ("delta",), "float": ("digits",), "clipping": ("rate", "gamma"), "gaussian": ("rho",)}
    for key in need[args.model]:
        if getattr(args, key) is None:
            flag = "--lambda" if key == "rate" else f"--{key}"
            raise InputError(f"model {args.model} requires {flag}")
    try:
        if args.model == "rounding":
            return UncertainDesign.rounding(H, args.delta, args.sigma)
        if args.model == "float":
            return UncertainDesign.floating_point(H, half_unit_last_digit(H, args.digits), args.sigma)
        if args.model == "clipping":
            return UncertainDesign.clipping(H, args.rate, args.gamma, args.sigma)
        return UncertainDesign.gaussian(H, args.rho, args.sigma)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def cmd_fit(args):
    H = read_csv_matrix(args.design)
    y = read_csv_matrix(args.obs)
    if y.shape[1] != 1:
        raise InputError(f"{args.obs}: expected a single column")
    y = y[:, 0]
    if y.shape[0] != H.shape[0]:
        raise InputError(f"dimension mismatch: design has {H.shape[0]} rows, observations {y.shape[0]}")
    design = _build_design(args, H)
    methods = ("ols", "tls", "aml") if args.method == "all" else (args.method,)
    opts = FitOptions(gtol=args.gtol, max_iters=args.max_iters, memory=args.memory, init=args.init)
    results = []
    status = EXIT_OK
    for method in methods:
        try:
            if method == "ols":
                est = ols(H, y)
            elif method == "tls":
                est = tls(H, y)
            else:
                est = aml_fit(design, y, opts)
        except TlsDegenerate as exc:
            print(f"tls: {exc}", file=sys.stderr)
            status = EXIT_NUMERIC
            continue
        if not est.converged:
            print(f"{method}: not converged ({est.message})", file=sys.stderr)
            status = EXIT_NUMERIC
        results.append(est)
    n = H.shape[1]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "objective", "iterations", "converged", "grad_norm"] + [f"x_{j + 1}" for j in range(n)])
    for est in results:
        w.writerow(
            [est.method, _fmt(est.objective), est.iterations, _fmt(est.converged)]
            + [_fmt(est.grad_norm) if est.method == "AML" else ""]
            + [_fmt(v) for v in est.x_hat]
        )
    _write(args.out, buf.getvalue())
    return status


# --------------------------------------------------------------------------
# simulate

_CONFIG_KEYS = {
    "command", "model", "m", "n", "values", "trials", "seed", "sigma",
    "low", "high", "delta", "digits", "max_exponent", "rate", "lambda",
    "threshold", "gamma", "mean_variance", "rho",
    "gtol", "max_iters", "memory", "init", "format", "workers", "record_timings",
}
_COMMANDS = ("sweep_rows", "sweep_cols", "square_study")


def _default_values(command):
    if command == "sweep_rows":
        return sorted({int(round(v)) for v in np.geomspace(21, 2000, 12)})
    return sorted({int(round(v)) for v in np.linspace(1, 99, 12)})


def load_config(path):
    """Parse and validate a simulation config; returns a plain dict."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON ({exc.msg})") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    unknown = sorted(set(cfg) - _CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"{path}: unknown key(s): {', '.join(unknown)}")
    for key in ("command", "model"):
        if key not in cfg:
            raise ConfigError(f"{path}: missing required key '{key}'")
    if cfg["command"] not in _COMMANDS:
        raise ConfigError(f"{path}: key 'command' must be one of {_COMMANDS}")
    if cfg["model"] not in MODEL_NAMES:
        raise ConfigError(f"{path}: key 'model' must be one of {tuple(MODEL_NAMES)}")
    for a, b in (("rate", "lambda"), ("threshold", "gamma")):
        if a in cfg and b in cfg:
            raise ConfigError(f"{path}: give only one of '{a}' and '{b}'")
        if b in cfg:
            cfg[a] = cfg.pop(b)
    ints = ("m", "n", "trials", "seed", "digits", "max_exponent", "max_iters", "memory", "workers")
    for key in ints:
        if key in cfg and (not isinstance(cfg[key], int) or isinstance(cfg[key], bool) or cfg[key] < 0):
            raise ConfigError(f"{path}: key '{key}' must be a non-negative integer")
    reals = ("sigma", "low", "high", "delta", "rate", "threshold", "mean_variance", "rho", "gtol")
    for key in reals:
        if key in cfg and (not isinstance(cfg[key], (int, float)) or isinstance(cfg[key], bool)):
            raise ConfigError(f"{path}: key '{key}' must be a number")
    if "values" in cfg:
        if cfg["command"] == "square_study":
            raise ConfigError(f"{path}: key 'values' is not used by square_study")
        v = cfg["values"]
        if not (isinstance(v, list) and v and all(isinstance(a, int) and not isinstance(a, bool) for a in v)):
            raise ConfigError(f"{path}: key 'values' must be a non-empty list of integers")
    if cfg.get("format", "csv") not in ("csv", "csv+svg"):
        raise ConfigError(f"{path}: key 'format' must be 'csv' or 'csv+svg'")
    if "record_timings" in cfg and not isinstance(cfg["record_timings"], bool):
        raise ConfigError(f"{path}: key 'record_timings' must be true or false")
    if "init" in cfg and cfg["init"] not in ("ols", "tls", "zero"):
        raise ConfigError(f"{path}: key 'init' must be 'ols', 'tls' or 'zero'")
    return cfg


def _spec_from_config(cfg):
    command = cfg["command"]
    defaults = {"sweep_rows": (21, 20), "sweep_cols": (100, 1), "square_study": (55, 50)}[command]
    m, n = cfg.get("m", defaults[0]), cfg.get("n", defaults[1])
    values = cfg.get("values") or _default_values(command)
    if command == "sweep_rows":
        m = max(values)
        if min(values) <= n:
            raise ConfigError(f"sweep_rows values must exceed n={n}")
    elif command == "sweep_cols":
        n = 1
        if max(values) >= m or min(values) < 1:
            raise ConfigError(f"sweep_cols values must lie in 1..{m - 1}")
    fields = ("sigma", "low", "high", "delta", "digits", "max_exponent", "rate", "threshold", "mean_variance", "rho")
    kwargs = {k: cfg[k] for k in fields if k in cfg}
    try:
        spec = ex.GeneratorSpec(MODEL_NAMES[cfg["model"]], m, n, seed=cfg.get("seed", 0), **kwargs)
        opts = FitOptions(
            gtol=cfg.get("gtol", 1e-6),
            max_iters=cfg.get("max_iters", 500),
            memory=cfg.get("memory", 10),
            init=cfg.get("init", "ols"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return spec, opts, values


def cmd_simulate(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    spec, opts, values = _spec_from_config(cfg)
    trials = cfg.get("trials", 200)
    seed = cfg.get("seed", 0)
    workers = cfg.get("workers", 1)
    command = cfg["command"]
    if command == "square_study":
        records = ex.run_square_study(spec, trials, seed, opts, workers)
    else:
        axis = "rows" if command == "sweep_rows" else "cols"
        records = ex.run_sweep(spec, axis, values, trials, seed, opts, workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "trials.csv", ex.trials_csv(records, timings=cfg.get("record_timings", False)))
    if records:
        rows = ex.summarize(records)
        _write(out / "summary.csv", ex.summary_csv(rows))
        if cfg.get("format", "csv") == "csv+svg":
            _write_figures(out, command, spec, rows, records)
    else:
        _write(out / "summary.csv", ex.summary_csv([]))
    return EXIT_OK


def _write_figures(out, command, spec, rows, records):
    if command == "square_study":
        ratios = {
            "AML/OLS": [r.err_aml / r.err_ols for r in records if r.err_ols > 0],
            "AML/TLS": [r.err_aml / r.err_tls for r in records if r.err_tls > 0],
        }
        svg = histogram(ratios, title=f"{spec.model}: error ratios, {spec.m}x{spec.n}", xlabel="error ratio")
        _write(out / "error_ratio_hist.svg", svg)
        return
    key = "m" if command == "sweep_rows" else "n"
    xs = [row[key] for row in rows]
    series = {k.upper(): [row[f"median_{k}"] for row in rows] for k in ("aml", "ols", "tls")}
    svg = line_chart(xs, series, title=f"{spec.model}: median relative error", xlabel=key, ylabel="median relative error")
    _write(out / "median_error.svg", svg)


# --------------------------------------------------------------------------
# density

_COMPONENT_RE = re.compile(r"^\s*(?:(\d+)\s*\*\s*)?([a-z]+)\s*\(([^()]*)\)\s*$")
_COMPONENTS = {"normal": (Normal, 2), "uniform": (Uniform, 2), "exponential": (Exponential, 1)}


def parse_components(text):
    """Parse e.g. ``"uniform(0,1)+normal(0,1)"`` or ``"20*uniform(0,1)"``."""
    comps = []
    for part in text.split("+"):
        mt = _COMPONENT_RE.match(part)
        if not mt:
            raise InputError(f"cannot parse component {part.strip()!r}")
        count, name, params = mt.groups()
        if name not in _COMPONENTS:
            raise InputError(f"unsupported component {name!r}; expected one of {tuple(_COMPONENTS)}")
        cls, arity = _COMPONENTS[name]
        try:
            vals = [float(v) for v in params.split(",")] if params.strip() else []
        except ValueError:
            raise InputError(f"bad parameters in {part.strip()!r}") from None
        if len(vals) != arity:
            raise InputError(f"{name} takes {arity} parameter(s)")
        try:
            comp = cls(*vals)
        except ValueError as exc:
            raise InputError(str(exc)) from None
        comps.extend([comp] * int(count or 1))
    return comps


def cmd_density(args):
    comps = parse_components(args.components)
    if args.points < 1:
        raise InputError("--points must be >= 1")
    if args.to < args.start or (args.points > 1 and args.to == args.start):
        raise InputError("empty range")
    grid = np.linspace(args.start, args.to, args.points) if args.points > 1 else np.array([args.start])
    cgf = sum_cgf(comps)
    mean = sum(c.mean for c in comps)
    sd = math.sqrt(sum(c.variance for c in comps))
    header = ["alpha", "saddle"]
    if args.oracle:
        header.append("oracle")
    if args.gaussian_fit:
        header.append("gaussian_fit")
    if args.diagnostics:
        header.append("t0")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for a in grid:
        a = float(a)
        t0 = saddle_point(cgf, a)
        dens = math.exp(cgf(t0, 0) - t0 * a) / math.sqrt(2 * math.pi * cgf(t0, 2))
        row = [_fmt(a), _fmt(dens)]
        if args.oracle:
            row.append(_fmt(convolution_oracle_pdf(comps, a)))
        if args.gaussian_fit:
            row.append(_fmt(math.exp(-0.5 * ((a - mean) / sd) ** 2) / (sd * math.sqrt(2 * math.pi))))
        if args.diagnostics:
            row.append(_fmt(t0))
        w.writerow(row)
    _write(args.out, buf.getvalue())
    return EXIT_OK


# --------------------------------------------------------------------------


def _write(path, text):
    if str(path) == "-":
        sys.stdout.write(text)
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _u64(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="saddle-mle", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit OLS / TLS / AML to a design and observation file")
    f.add_argument("--design", required=True, help="m x n CSV of the observed design (header row required)")
    f.add_argument("--obs", required=True, help="length-m single-column CSV of observations")
    f.add_argument("--model", required=True, choices=tuple(MODEL_NAMES))
    f.add_argument("--delta", type=float)
    f.add_argument("--digits", type=int)
    f.add_argument("--lambda", dest="rate", type=float)
    f.add_argument("--gamma", type=float)
    f.add_argument("--rho", type=float)
    f.add_argument("--sigma", type=float, required=True)
    f.add_argument("--method", choices=("ols", "tls", "aml", "all"), default="all")
    f.add_argument("--gtol", type=float, default=1e-6)
    f.add_argument("--max-iters", type=int, default=500)
    f.add_argument("--memory", type=int, default=10)
    f.add_argument("--init", choices=("ols", "tls", "zero"), default="ols")
    f.add_argument("--out", default="-")
    f.add_argument("--seed", type=_u64)
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("simulate", help="run a simulation study from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--seed", type=_u64, help="overrides the config seed")
    s.set_defaults(func=cmd_simulate)

    d = sub.add_parser("density", help="tabulate the saddle-point density of a sum")
    d.add_argument("--components", required=True, help='e.g. "uniform(0,1)+normal(0,1)" or "20*uniform(0,1)"')
    d.add_argument("--from", dest="start", type=float, required=True)
    d.add_argument("--to", type=float, required=True)
    d.add_argument("--points", type=int, default=101)
    d.add_argument("--oracle", action="store_true", help="add the quadrature density")
    d.add_argument("--gaussian-fit", action="store_true", help="add the moment-matched normal density")
    d.add_argument("--diagnostics", action="store_true", help="add the saddle point t0")
    d.add_argument("--out", default="-")
    d.add_argument("--seed", type=_u64)
    d.set_defaults(func=cmd_density)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (InputError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NoConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except SaddleMLEError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT if isinstance(exc, ValueError) else EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
