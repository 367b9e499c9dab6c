"""Command-line front end: ``resamp-hd <command> [options]``.

Every option can also come from a TOML file given with ``--config``; flags
win over file keys and unknown keys are rejected. Each CSV output starts with
``#`` lines echoing the effective configuration (in TOML syntax), so a run
can be repeated from its own output.

Exit codes: 0 success, 2 configuration or data error, 3 runtime, numeric or
I/O failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings

import numpy as np

from . import __version__
from .aggregators import LpNorm, parse_aggregator
from .errors import CapacityError, InfeasibleLevelError, StepDownNotConverged
from .experiments import COLUMNS, desk_config, paper_config, run_experiment
from .io import DataFormatError, read_csv_rows, read_data_csv, read_vector, svg_line_chart, write_csv, write_text
from .mtp import Procedure, bracket
from .thresholds import METHOD_NAMES, Estimated, Known, ThresholdSpec, confidence_region, parse_method, threshold
from .weights import constants, parse_scheme, scheme_indices

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

__all__ = ["main", "build_parser", "parse_config", "RunConfig", "UsageError", "DEFAULT_SEED",
           "parse_grid", "parse_sigma", "charts_for"]

DEFAULT_SEED = 20240601


class UsageError(ValueError):
    """Missing, conflicting or malformed options."""


# Documented defaults per command; a key absent here is not a valid option.
_COMMON = {"config": None, "out": None, "seed": DEFAULT_SEED}
_THRESH = {"in": None, "method": "quant-bonf", "alpha": 0.05, "side": "two", "phi": None, "B": 1000,
           "delta": 0.1, "alpha0_frac": 0.9, "sigma": "known:1", "scheme": "rademacher", "M": 1.0,
           "strict": False, "exact": False, "b_w": "lower"}
DEFAULTS = {
    "constants": {**_COMMON, "scheme": ["rademacher", "efron", "rho", "loo", "vfold:2"], "n": None,
                  "mc_draws": 100_000},
    "threshold": {**_COMMON, **_THRESH},
    "confset": {**_COMMON, **_THRESH, "allow_unproven": False},
    "test": {**_COMMON, "in": None, "procedure": "sd:quant-uncent", "alpha": 0.05, "side": "two", "B": 1000,
             "delta": 0.1, "alpha0_frac": 0.9, "sigma": "known:1", "strict": False},
    "simulate": {**_COMMON, "experiment": None, "scale": "desk", "d": None, "n": None, "trials": None,
                 "b_grid": None, "r_grid": None, "b": None, "alpha": None, "B": None, "delta": None,
                 "alpha0_frac": None, "ideal_trials": None, "convolution": None, "workers": None,
                 "svg": False},
    "report": {"config": None, "in": None, "out": None},
}
REQUIRED = {"constants": ("n",), "threshold": ("in",), "confset": ("in",), "test": ("in",),
            "simulate": ("experiment",), "report": ("in",)}


class RunConfig(dict):
    """Effective options of one run (a dict with the command name)."""

    def __init__(self, command: str, options: dict):
        super().__init__(options)
        self.command = command

    def __getattr__(self, key):
        try:
            return self[key]
        except KeyError:
            raise AttributeError(key) from None

    def header(self) -> list[str]:
        lines = [f"resamp-hd {__version__} {self.command}"]
        for k in sorted(self):
            v = self[k]
            if v is None or k == "config":
                continue
            lines.append(f"{k} = {_toml_value(v)}")
        return lines


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    if isinstance(v, int):
        return str(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    return json.dumps(str(v))


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="resamp-hd", description="Resampling confidence regions and multiple tests "
                "for high-dimensional Gaussian means.")
    p.add_argument("--version", action="version", version=f"resamp-hd {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, out_help="output file (default: stdout)"):
        sp.add_argument("--config", help="TOML file with option values")
        sp.add_argument("--out", help=out_help)
        sp.add_argument("--seed", type=int, help=f"random seed (default {DEFAULT_SEED})")

    sp = sub.add_parser("constants", help="resampling constants of weight schemes")
    common(sp)
    sp.add_argument("--scheme", action="append", help="rademacher, efron[:q], bernoulli:p, poisson:mu, "
                    "rho[:q], loo, vfold:V (repeatable)")
    sp.add_argument("--n", type=int, help="sample size")
    sp.add_argument("--mc-draws", dest="mc_draws", type=int, help="draws for the B_W estimate")

    def thresh_opts(sp):
        sp.add_argument("--in", dest="in", help="data CSV: one row per coordinate, one column per observation")
        sp.add_argument("--method", choices=METHOD_NAMES)
        sp.add_argument("--alpha", type=float)
        sp.add_argument("--side", choices=("one", "two"))
        sp.add_argument("--phi", help="lp:<p>[:norm] for an lp-norm region")
        sp.add_argument("--B", dest="B", type=int, help="Monte Carlo weight draws")
        sp.add_argument("--delta", type=float)
        sp.add_argument("--alpha0-frac", dest="alpha0_frac", type=float)
        sp.add_argument("--sigma", help="known:<value|file> or estimate[:<delta>]")
        sp.add_argument("--scheme", help="weight scheme for conc, quant-conc and bounded")
        sp.add_argument("--M", dest="M", type=float, help="data bound for the bounded method")
        sp.add_argument("--strict", action="store_true", default=None, help="add Monte Carlo corrections")
        sp.add_argument("--exact", action="store_true", default=None, help="enumerate the weight support")
        sp.add_argument("--b-w", dest="b_w", choices=("lower", "mc"))

    sp = sub.add_parser("threshold", help="threshold value with its components")
    common(sp)
    thresh_opts(sp)

    sp = sub.add_parser("confset", help="confidence region for the mean")
    common(sp)
    thresh_opts(sp)
    sp.add_argument("--allow-unproven", dest="allow_unproven", action="store_true", default=None)

    sp = sub.add_parser("test", help="multiple test of H_k: mu_k = 0")
    common(sp, "output directory for coordinates.csv, rejections.csv and trace.csv (default: "
               "coordinates to stdout)")
    sp.add_argument("--in", dest="in")
    sp.add_argument("--procedure", help="holm | single:<method> | sd:<method> | hybrid")
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--side", choices=("one", "two"))
    sp.add_argument("--B", dest="B", type=int)
    sp.add_argument("--delta", type=float)
    sp.add_argument("--alpha0-frac", dest="alpha0_frac", type=float)
    sp.add_argument("--sigma")
    sp.add_argument("--strict", action="store_true", default=None)

    sp = sub.add_parser("simulate", help="torus-field experiments")
    common(sp, "output directory (default: current directory)")
    sp.add_argument("--experiment", choices=tuple(COLUMNS))
    sp.add_argument("--scale", choices=("desk", "paper"), help="base settings (default desk)")
    sp.add_argument("--d", type=int)
    sp.add_argument("--n", type=int)
    sp.add_argument("--trials", type=int)
    sp.add_argument("--b-grid", dest="b_grid", help="a:b:step or a,b,c")
    sp.add_argument("--r-grid", dest="r_grid", help="a:b:step or a,b,c")
    sp.add_argument("--b", dest="b", type=float, help="bandwidth for fig3")
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--B", dest="B", type=int)
    sp.add_argument("--delta", type=float)
    sp.add_argument("--alpha0-frac", dest="alpha0_frac", type=float)
    sp.add_argument("--ideal-trials", dest="ideal_trials", type=int)
    sp.add_argument("--convolution", choices=("direct", "fft"))
    sp.add_argument("--workers", type=int)
    sp.add_argument("--svg", action="store_true", default=None, help="also write SVG charts")

    sp = sub.add_parser("report", help="SVG charts from a results CSV")
    sp.add_argument("--config")
    sp.add_argument("--in", dest="in")
    sp.add_argument("--out", help="output directory (default: current directory)")
    return p


def _load_config(path: str, command: str) -> dict:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as e:
        raise UsageError(f"cannot read config file {path}: {e.strerror}") from None
    except tomllib.TOMLDecodeError as e:
        raise UsageError(f"config file {path}: {e}") from None
    # A [command] table may hold the options; top-level keys apply otherwise.
    if command in data and isinstance(data[command], dict):
        data = {**{k: v for k, v in data.items() if not isinstance(v, dict)}, **data[command]}
    out = {}
    allowed = DEFAULTS[command]
    for k, v in data.items():
        key = k.replace("-", "_")
        if isinstance(v, dict) or key not in allowed or key == "config":
            raise UsageError(f"unknown key {k!r} in config file for '{command}'")
        out[key] = v
    return out


def parse_config(argv=None) -> RunConfig:
    """argv (and its optional --config file) -> effective options."""
    args = build_parser().parse_args(argv)
    cmd = args.command
    opts = dict(DEFAULTS[cmd])
    flags = {k: v for k, v in vars(args).items() if k != "command" and v is not None}
    if flags.get("config"):
        opts.update(_load_config(flags["config"], cmd))
    opts.update(flags)
    missing = [k for k in REQUIRED[cmd] if opts.get(k) in (None, "", [])]
    if missing:
        raise UsageError(f"{cmd}: missing required option(s): " +
                         ", ".join("--" + k.replace("_", "-") for k in missing))
    return RunConfig(cmd, opts)


# ---------------------------------------------------------------------------
# option parsing helpers


def parse_grid(text) -> tuple[float, ...]:
    """``a:b:step`` (inclusive) or a comma-separated list; lists pass through."""
    if isinstance(text, (list, tuple)):
        return tuple(float(x) for x in text)
    text = str(text).strip()
    try:
        if ":" in text:
            a, b, step = (float(x) for x in text.split(":"))
            if step <= 0 or b < a:
                raise UsageError(f"bad grid {text!r}: need a <= b and step > 0")
            m = int(math.floor((b - a) / step + 1e-9))
            return tuple(round(a + i * step, 12) for i in range(m + 1))
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise UsageError(f"bad grid {text!r}; expected a:b:step or a,b,c") from None


def parse_sigma(text: str):
    """``known:<value>``, ``known:<file>``, ``estimate`` or ``estimate:<delta>``."""
    head, _, arg = str(text).partition(":")
    if head == "known":
        if not arg:
            raise UsageError("--sigma known: needs a value or a file")
        try:
            return Known(float(arg))
        except ValueError:
            pass
        v = read_vector(arg)
        if v.size == 0:
            raise DataFormatError(f"{arg}: no standard deviations")
        return Known(tuple(float(x) for x in v))
    if head == "estimate":
        try:
            return Estimated(float(arg) if arg else None)
        except ValueError:
            raise UsageError(f"bad --sigma {text!r}") from None
    raise UsageError(f"bad --sigma {text!r}; expected known:<value|file> or estimate[:<delta>]")


def _check_alpha(a: float) -> float:
    if not 0.0 < float(a) < 1.0:
        raise UsageError(f"alpha must lie in (0, 1), got {a}")
    return float(a)


def _load_data(path: str) -> np.ndarray:
    try:
        return read_data_csv(path)
    except FileNotFoundError:
        raise DataFormatError(f"{path}: no such file") from None


def _emit(text: str, out) -> None:
    write_text(text, out if out else sys.stdout)


def _threshold_spec(cfg: RunConfig, Y: np.ndarray) -> ThresholdSpec:
    agg = parse_aggregator(cfg.side, cfg.phi)
    method = parse_method(cfg.method, B=int(cfg.B), delta=float(cfg.delta), alpha0_frac=float(cfg.alpha0_frac),
                          scheme=parse_scheme(cfg.scheme), M=float(cfg.M))
    sigma = parse_sigma(cfg.sigma)
    if isinstance(sigma, Known) and np.ndim(sigma.sigma) == 1 and len(sigma.sigma) != Y.shape[0]:
        raise DataFormatError(f"sigma file has {len(sigma.sigma)} values for K = {Y.shape[0]} coordinates")
    return ThresholdSpec(method, agg, sigma, strict=bool(cfg.strict), exact=bool(cfg.exact), b_w=cfg.b_w)


# ---------------------------------------------------------------------------
# commands


def cmd_constants(cfg: RunConfig) -> None:
    n = int(cfg.n)
    rows = []
    for i, text in enumerate(cfg.scheme):
        sch = parse_scheme(text)
        k = constants(sch, n, mc_draws=int(cfg.mc_draws), rng=[int(cfg.seed), i])
        idx = scheme_indices(sch, n)
        b_mc, b_se = k.b_w_estimate
        rows.append({"scheme": k.scheme, "n": n, "A": k.a_w, "B_lower": k.b_w_lower, "B_mc": b_mc,
                     "B_mc_stderr": b_se, "C": k.c_w, "D": "" if k.d_w is None else k.d_w,
                     "accuracy": idx.accuracy,
                     "complexity": "inf" if idx.complexity is None else idx.complexity})
    cols = ("scheme", "n", "A", "B_lower", "B_mc", "B_mc_stderr", "C", "D", "accuracy", "complexity")
    _emit(write_csv(rows, cols, comments=cfg.header()), cfg.out)


def cmd_threshold(cfg: RunConfig) -> None:
    alpha = _check_alpha(cfg.alpha)
    Y = _load_data(cfg["in"])
    spec = _threshold_spec(cfg, Y)
    tv = threshold(spec, Y, alpha=alpha, rng=int(cfg.seed))
    rows = [{"component": "threshold", "value": tv.value}]
    rows += [{"component": k, "value": v} for k, v in tv.components.items()]
    _emit(write_csv(rows, ("component", "value"), comments=cfg.header()), cfg.out)


def cmd_confset(cfg: RunConfig) -> None:
    alpha = _check_alpha(cfg.alpha)
    Y = _load_data(cfg["in"])
    spec = _threshold_spec(cfg, Y)
    reg = confidence_region(Y, spec, alpha, int(cfg.seed), allow_unproven=bool(cfg.allow_unproven))
    agg, K = reg.agg, Y.shape[0]
    # Per-coordinate projection of the region.
    half = reg.radius
    if isinstance(agg, LpNorm) and agg.normalized:
        half = reg.radius * K ** (1.0 / agg.p)
    one = cfg.side == "one" and not isinstance(agg, LpNorm)
    rows = [{"index": k, "center": c, "lower": c - half, "upper": math.inf if one else c + half}
            for k, c in enumerate(reg.center)]
    header = cfg.header() + [f"radius = {_toml_value(float(reg.radius))}"]
    _emit(write_csv(rows, ("index", "center", "lower", "upper"), comments=header), cfg.out)


def _procedure(cfg: RunConfig) -> Procedure:
    alpha = _check_alpha(cfg.alpha)
    text = str(cfg.procedure)
    kind, _, mname = text.partition(":")
    common = dict(side=cfg.side, alpha=alpha, sigma=parse_sigma(cfg.sigma), B=int(cfg.B),
                  delta=float(cfg.delta), strict=bool(cfg.strict))
    if kind in ("holm", "hybrid"):
        if mname:
            raise UsageError(f"procedure {kind!r} takes no method")
        a0 = float(cfg.alpha0_frac) * alpha if kind == "hybrid" else None
        return Procedure(kind, alpha0=a0, **common)
    if kind in ("single", "sd"):
        if not mname:
            raise UsageError(f"procedure {kind!r} needs a method, e.g. {kind}:quant-bonf")
        m = parse_method(mname, B=int(cfg.B), delta=float(cfg.delta), alpha0_frac=float(cfg.alpha0_frac))
        return Procedure(kind, m, **common)
    raise UsageError(f"bad --procedure {text!r}; expected holm, single:<method>, sd:<method> or hybrid")


def cmd_test(cfg: RunConfig) -> None:
    proc = _procedure(cfg)
    Y = _load_data(cfg["in"])
    res = proc.run(Y, int(cfg.seed))
    mean = Y.mean(axis=1)
    vals = bracket(mean, proc.aggregator)
    rej = res.rejected_mask
    coords = [{"index": k, "mean": mean[k], "bracket_value": vals[k], "rejected": bool(rej[k]),
               "iteration_rejected": int(res.iteration_rejected[k])} for k in range(mean.size)]
    header = cfg.header()
    ctext = write_csv(coords, ("index", "mean", "bracket_value", "rejected", "iteration_rejected"),
                      comments=header)
    if not cfg.out:
        _emit(ctext, None)
        return
    os.makedirs(cfg.out, exist_ok=True)
    write_text(ctext, os.path.join(cfg.out, "coordinates.csv"))
    rejections = [{"index": int(k), "iteration_rejected": int(res.iteration_rejected[k])} for k in res.rejected]
    write_csv(rejections, ("index", "iteration_rejected"), os.path.join(cfg.out, "rejections.csv"))
    trace = [{"iteration": j + 1, "size": len(C), "threshold": float(t)} for j, (C, t) in enumerate(res.trace)]
    write_csv(trace, ("iteration", "size", "threshold"), os.path.join(cfg.out, "trace.csv"))


def _experiment_config(cfg: RunConfig):
    over = {}
    for key in ("d", "n", "trials", "B", "ideal_trials", "workers"):
        if cfg[key] is not None:
            over[key] = int(cfg[key])
    for key in ("b", "delta", "alpha0_frac"):
        if cfg[key] is not None:
            over[key] = float(cfg[key])
    if cfg.alpha is not None:
        over["alpha"] = _check_alpha(cfg.alpha)
    for key in ("b_grid", "r_grid"):
        if cfg[key] is not None:
            over[key] = parse_grid(cfg[key])
    if cfg.convolution is not None:
        over["convolution"] = cfg.convolution
    over["seed"] = int(cfg.seed)
    base = paper_config if cfg.scale == "paper" else desk_config
    return base(cfg.experiment, **over)


def _num(x):
    try:
        return float(x)
    except (TypeError, ValueError):
        return math.nan


def charts_for(kind: str, rows: list[dict]) -> dict:
    """File name -> SVG text for an experiment table (values may be strings)."""
    xkey = "r" if kind == "fig3" else "b"

    def series(ykey):
        out = {}
        for r in rows:
            xs, ys = out.setdefault(r["method"], ([], []))
            xs.append(_num(r[xkey]))
            ys.append(_num(r[ykey]))
        return {k: v for k, v in out.items() if any(math.isfinite(y) for y in v[1])}

    if kind == "fig1":
        return {"fig1_thresholds.svg": svg_line_chart(series("mean_threshold"), "Average threshold (mu = 0)",
                                                      "bandwidth b", "threshold")}
    if kind == "fig2":
        return {"fig2_thresholds.svg": svg_line_chart(series("mean_threshold"), "Average threshold",
                                                      "bandwidth b", "threshold"),
                "fig2_power.svg": svg_line_chart(series("mean_power"), "Power", "bandwidth b", "power")}
    if kind == "fig3":
        return {"fig3_iterations.svg": svg_line_chart(series("mean_iterations"), "Mean step-down iterations",
                                                      "dynamic range r (dB)", "iterations"),
                "fig3_power_cap_2.svg": svg_line_chart(series("ratio_cap_2"),
                                                       "Power after 2 iterations / uncapped power",
                                                       "dynamic range r (dB)", "ratio")}
    raise UsageError(f"unknown experiment {kind!r}")


def cmd_simulate(cfg: RunConfig) -> None:
    ecfg = _experiment_config(cfg)
    if cfg.scale == "paper":
        print("resamp-hd: warning: paper-scale settings take many hours", file=sys.stderr)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rows = run_experiment(ecfg)
    outdir = cfg.out or "."
    os.makedirs(outdir, exist_ok=True)
    header = cfg.header() + [f"experiment.{k} = {_toml_value(v)}"
                             for k, v in sorted(ecfg.to_dict().items()) if v is not None and k != "workers"]
    write_csv(rows, COLUMNS[ecfg.kind], os.path.join(outdir, f"{ecfg.kind}.csv"), header)
    if cfg.svg:
        for name, svg in charts_for(ecfg.kind, rows).items():
            write_text(svg, os.path.join(outdir, name))


def cmd_report(cfg: RunConfig) -> None:
    try:
        cols, rows = read_csv_rows(cfg["in"])
    except FileNotFoundError:
        raise DataFormatError(f"{cfg['in']}: no such file") from None
    kind = next((k for k, c in COLUMNS.items() if tuple(cols) == c), None)
    if kind is None:
        raise DataFormatError(f"{cfg['in']}: not an experiment table")
    outdir = cfg.out or "."
    os.makedirs(outdir, exist_ok=True)
    for name, svg in charts_for(kind, rows).items():
        write_text(svg, os.path.join(outdir, name))


COMMANDS = {"constants": cmd_constants, "threshold": cmd_threshold, "confset": cmd_confset,
            "test": cmd_test, "simulate": cmd_simulate, "report": cmd_report}


def main(argv=None) -> int:
    try:
        cfg = parse_config(argv)
        COMMANDS[cfg.command](cfg)
    except (InfeasibleLevelError, CapacityError, StepDownNotConverged) as e:
        print(f"resamp-hd: error: {e}", file=sys.stderr)
        return 3
    except ValueError as e:  # usage, data format, unsupported combinations, bad values
        print(f"resamp-hd: error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"resamp-hd: error: {e}", file=sys.stderr)
        return 3
    except Exception as e:  # noqa: BLE001
        print(f"resamp-hd: error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
