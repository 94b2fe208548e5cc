"""Command-line experiment runner.

Every statistics command needs ``--seed``; outputs are pure functions of the
arguments, so reruns and different ``--workers`` produce identical bytes.
Floats are written with 17 significant digits.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import sys
import time
from fractions import Fraction
from typing import List, Optional, Sequence

import numpy as np

from . import stats as S
from .corridors import classify_regime, enumerate_corridors
from .dynamics import Billiard, PhasePoint, liouville_uniforms
from .geometry import (
    DISK,
    WINDTREE,
    ModelParams,
    ParameterError,
    TrappingConfiguration,
    geometry_summary,
    validate_params,
)
from .presets import PRESETS, preset

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INSUFFICIENT = 3

STAT_COMMANDS = ("trace", "tail", "moment", "corr", "msd", "ctime", "report")


class ConfigError(Exception):
    pass


# ----------------------------------------------------------------------------
# output helpers


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return str(x)


def to_json(obj, indent: int = 0) -> str:
    """JSON text with floats at 17 significant digits; NaN and inf become null."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{to_json(str(k))}: {to_json(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(to_json(v) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + to_json(v, indent + 1) for v in seq) + "\n" + end + "]"
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return "null" if not math.isfinite(v) else "%.17g" % v
    if isinstance(obj, str):
        import json
        return json.dumps(obj)
    return to_json(str(obj))


def write_csv(path: Optional[str], header: Sequence[str], rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    if path is None or path == "-":
        sys.stdout.write(buf.getvalue())
    else:
        with open(path, "w", newline="") as fh:
            fh.write(buf.getvalue())


def emit(args, summary: dict, text: str) -> None:
    if args.json:
        sys.stdout.write(to_json(summary) + "\n")
    else:
        sys.stdout.write(text.rstrip("\n") + "\n")


# ----------------------------------------------------------------------------
# configuration


def params_from_args(args) -> ModelParams:
    base = preset(args.preset) if args.preset else None
    kind = args.kind or (base.kind if base else WINDTREE)
    r = args.r if args.r is not None else (base.r if base else None)
    if r is None:
        raise ConfigError("--r is required")
    if kind == DISK:
        R = args.disk_radius if args.disk_radius is not None else (base.disk_radius if base and base.kind == DISK else None)
        if R is None:
            raise ConfigError("--disk-radius is required for --kind disk")
        return ModelParams.lorentz(disk_radius=R, r=r)
    a = args.a if args.a is not None else (base.a if base and base.is_windtree else None)
    if a is None:
        raise ConfigError("--a is required for --kind windtree")
    if args.theta_tan is not None and args.theta_rad is not None:
        raise ConfigError("give only one of --theta-tan and --theta-rad")
    if args.theta_tan is not None:
        try:
            frac = Fraction(args.theta_tan)
        except (ValueError, ZeroDivisionError):
            raise ConfigError(f"--theta-tan: cannot parse {args.theta_tan!r} as m/n") from None
        return ModelParams.windtree(a=a, r=r, theta_tan=frac)
    if args.theta_rad is not None:
        return ModelParams.windtree(a=a, r=r, theta=args.theta_rad)
    if base is not None and base.is_windtree:
        if base.theta_tan is not None:
            return ModelParams.windtree(a=a, r=r, theta_tan=base.theta_tan)
        return ModelParams.windtree(a=a, r=r, theta=base.theta)
    raise ConfigError("one of --theta-tan or --theta-rad is required")


def config_echo(p: ModelParams, args) -> dict:
    d = {"kind": p.kind, "r": p.r}
    if p.is_windtree:
        d.update(theta=p.theta, a=p.a, theta_tan=str(p.theta_tan) if p.theta_tan is not None else None)
    else:
        d["disk_radius"] = p.disk_radius
    if args.preset:
        d["preset"] = args.preset
    return d


def _positive(name):
    def conv(s):
        try:
            v = float(s) if name in ("max-len",) else int(float(s))
        except ValueError:
            raise argparse.ArgumentTypeError(f"--{name}: expected a number, got {s!r}") from None
        if v <= 0:
            raise argparse.ArgumentTypeError(f"--{name}: must be positive, got {s}")
        return v
    return conv


def _seed(s):
    try:
        v = int(s, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--seed: expected an integer, got {s!r}") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("--seed: must fit in 64 unsigned bits")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="windtree", description="Wind-tree billiard experiments.")
    sub = ap.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("model")
    g.add_argument("--preset", choices=sorted(PRESETS))
    g.add_argument("--kind", choices=[WINDTREE, DISK])
    g.add_argument("--theta-tan", help="tan(theta) as a rational m/n")
    g.add_argument("--theta-rad", type=float, help="theta in radians")
    g.add_argument("--a", type=float, help="rhombus side length")
    g.add_argument("--r", type=float, help="particle radius")
    g.add_argument("--disk-radius", type=float)
    o = common.add_argument_group("run")
    o.add_argument("--max-len", type=_positive("max-len"), default=None)
    o.add_argument("--workers", type=_positive("workers"), default=None,
                   help="worker processes (default: $WINDTREE_WORKERS or 1)")
    o.add_argument("--out", help="CSV output path (default: stdout when --json is off)")
    o.add_argument("--json", action="store_true", help="print a JSON summary")
    o.add_argument("--timing", action="store_true", help="report wall-clock runtime on stderr")

    def add(name, help_, seed=True):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--seed", type=_seed, required=seed, default=None if seed else 0)
        return p

    add("validate", "check parameters and print geometry", seed=False)
    p = add("corridors", "list open corridors", seed=False)
    p.add_argument("--max-denom", type=_positive("max-denom"), default=64)
    p = add("trace", "trajectory CSV from a Liouville start")
    p.add_argument("--n", type=_positive("n"), default=1000)
    p = add("tail", "free-flight tail histogram and power-law fits")
    p.add_argument("--n", type=_positive("n"), default=1_000_000)
    p.add_argument("--lmin", type=float, default=10.0)
    p.add_argument("--lmax", type=float, default=None)
    p = add("moment", "truncated second moment against ln R")
    p.add_argument("--n", type=_positive("n"), default=1_000_000)
    p = add("corr", "flight-vector correlations along one orbit")
    p.add_argument("--m", type=_positive("m"), default=1_000_000)
    p.add_argument("--jmax", type=_positive("jmax"), default=10_000)
    p.add_argument("--trunc", type=float, default=1e3, help="truncation radius R")
    p = add("msd", "ensemble mean-square displacement and regime fits")
    p.add_argument("--k", type=_positive("k"), default=1000)
    p.add_argument("--n", type=_positive("n"), default=1000)
    p = add("ctime", "continuous-time rescaling")
    p.add_argument("--k", type=_positive("k"), default=1000)
    p.add_argument("--t-max", type=float, default=1e4)
    p = add("report", "acceptance presets in one JSON")
    p.add_argument("--scale", type=float, default=1.0, help="multiply every Monte Carlo budget")
    return ap


# ----------------------------------------------------------------------------
# commands


def cmd_validate(args, p):
    rep = validate_params(p)
    if not rep.ok:
        names = sorted({c.__name__ for c, _ in rep.violations})
        msg = "; ".join(m for _, m in rep.violations)
        emit(args, {"ok": False, "errors": names, "message": msg}, f"{', '.join(names)}: {msg}")
        return EXIT_CONFIG
    g = geometry_summary(p)
    regime = classify_regime(p).value
    summary = {"ok": True, "config": config_echo(p, args), "in_square_regime": rep.in_regime,
               "regime": regime, **g}
    text = "\n".join([f"ok  regime={regime}"] + [f"{k}={fmt(v)}" for k, v in g.items()])
    emit(args, summary, text)
    return EXIT_OK


def cmd_corridors(args, p):
    cs = enumerate_corridors(p, args.max_denom)
    rows = [c.as_dict() for c in cs]
    lines = [f"{len(cs)} open corridors", "direction  label         type  width_math           width_eff"]
    for c in cs:
        lines.append(f"({c.direction[0]},{c.direction[1]})".ljust(11) + c.label.ljust(14)
                     + c.ctype.value.ljust(6) + fmt(c.width_math).ljust(21) + fmt(c.width_eff))
    emit(args, {"config": config_echo(p, args), "regime": classify_regime(p, args.max_denom).value,
                "count": len(cs), "corridors": rows}, "\n".join(lines))
    return EXIT_OK


def cmd_trace(args, p):
    bil = Billiard(p, args.max_len or 1e4)
    from . import _engine as eng
    u = liouville_uniforms(args.seed, 0, 1)[0]
    s, phi = eng.liouville_sample(bil.kp, u[0], u[1])
    if eng.near_junction(bil.kp, s):
        s, phi = eng.liouville_sample(bil.kp, u[2], u[3])
    tr = bil.trace(PhasePoint((0, 0), s, phi), n_collisions=args.n)
    pos = tr.positions()
    rows = [(k, tr.cells[k, 0], tr.cells[k, 1], pos[k, 0], pos[k, 1], tr.t[k], tr.s[k], tr.phi[k],
             "Flat" if tr.kind[k] == 0 else "Dispersing", S.CLASS_LABELS[tr.flight_class[k]])
            for k in range(len(tr.t))]
    header = ("n", "cell_x", "cell_y", "x", "y", "t", "s", "phi", "end_kind", "corridor_class")
    if args.out or not args.json:
        write_csv(args.out, header, rows)
    if args.json:
        sys.stdout.write(to_json({"config": config_echo(p, args), "seed": args.seed,
                                  "n_collisions": tr.n, "censored": tr.censored,
                                  "t_final": tr.t[-1]}) + "\n")
    return EXIT_OK


def _fits(h, classes, lmin, lmax):
    out = {}
    for name, cl in classes.items():
        try:
            out[name] = S.fit_powerlaw_ccdf(h, cl, lmin, lmax).as_dict()
        except S.InsufficientData as e:
            out[name] = {"error": str(e)}
    return out


TAIL_GROUPS = {
    "Horizontal": 1, "Vertical": 2, "ObliquePlus": 3, "ObliqueMinus": 4,
    "Axis": (1, 2), "Oblique": (3, 4),
}


def tail_summary(p, h, lmin, lmax) -> dict:
    fits = _fits(h, TAIL_GROUPS, lmin, lmax)
    per_orient = {}
    for name, cl in (("Horizontal+", 1), ("Oblique+ (flat start)", (3, 4))):
        try:
            per_orient[name] = S.fit_powerlaw_ccdf(h, cl, lmin, lmax, orientation=1,
                                                   flat_only="flat" in name).as_dict()
        except S.InsufficientData as e:
            per_orient[name] = {"error": str(e)}
    return {
        "n_samples": h.n_total,
        "censored": h.n_censored,
        "mean_length": h.mean_length(),
        "fits": fits,
        "restricted_fits": per_orient,
        "reference_prefactors": S.reference_prefactors(p) if p.is_windtree else None,
        "line_measure_prefactors": S.crofton_prefactors(p),
    }


def cmd_tail(args, p):
    max_len = args.max_len or 1e4
    h = S.flight_tail(p, args.n, max_len, args.seed, args.workers)
    lmax = args.lmax or max_len / 10
    if args.out or not args.json:
        write_csv(args.out, ("class", "bin_lo", "bin_hi", "count", "ccdf"), h.rows())
    if args.json:
        summ = {"config": config_echo(p, args), "seed": args.seed, "max_len": max_len,
                **tail_summary(p, h, args.lmin, lmax)}
        sys.stdout.write(to_json(summ) + "\n")
    return EXIT_OK


def cmd_moment(args, p):
    max_len = args.max_len or 1e4
    m = S.truncated_second_moment(p, args.n, seed=args.seed, max_len=max_len, workers=args.workers)
    if args.out or not args.json:
        write_csv(args.out, ("R", "moment", "stderr"), zip(m.R, m.value, m.stderr))
    if args.json:
        summ = {"config": config_echo(p, args), "seed": args.seed, "n_samples": args.n,
                "fit": m.fit.as_dict(), "reference_slope": S.reference_moment_slope(p)}
        sys.stdout.write(to_json(summ) + "\n")
    return EXIT_OK


def cmd_corr(args, p):
    c = S.correlation(p, args.m, args.jmax, args.seed, R=args.trunc, max_len=args.max_len or 1e6)
    if args.out or not args.json:
        write_csv(args.out, ("j", "c_j", "stderr", "partial_sum"), c.rows())
    if args.json:
        summ = {"config": config_echo(p, args), "seed": args.seed, "M": c.M, "j_max": args.jmax,
                "R": c.R, "c0": c.c[0], "fit": c.fit.as_dict() if c.fit else None}
        sys.stdout.write(to_json(summ) + "\n")
    return EXIT_OK


def cmd_msd(args, p):
    curve = S.msd(p, args.k, args.n, args.seed, max_len=args.max_len or 1e6, workers=args.workers)
    if args.out or not args.json:
        write_csv(args.out, ("n", "msd", "stderr", "k_samples"), curve.rows())
    if args.json:
        summ = {"config": config_echo(p, args), "seed": args.seed, "K": args.k, "n_max": args.n,
                "best_model": curve.best.model, "fits": [f.as_dict() for f in curve.fits]}
        sys.stdout.write(to_json(summ) + "\n")
    return EXIT_OK


def cmd_ctime(args, p):
    r = S.ctime_rescale(p, args.k, args.t_max, args.seed, max_len=args.max_len or 1e6, workers=args.workers)
    if args.out or not args.json:
        write_csv(args.out, ("t", "msd_t", "ratio"), zip(r.t, r.msd_t, r.ratio_curve))
    if args.json:
        summ = {"config": config_echo(p, args), "seed": args.seed, "K": r.K, "t_max": args.t_max,
                "eta_hat": r.eta_hat, "eta_prediction": geometry_summary(p)["mean_free_path_prediction"],
                "coef_discrete": r.coef_discrete, "coef_continuous": r.coef_continuous,
                "coef_ratio": r.coef_ratio, "inverse_eta_hat": 1.0 / r.eta_hat}
        sys.stdout.write(to_json(summ) + "\n")
    return EXIT_OK


def cmd_report(args, p):
    from .acceptance import run_all
    results = run_all(seed=args.seed, scale=args.scale, workers=args.workers)
    summ = {"seed": args.seed, "scale": args.scale,
            "passed": sum(r["passed"] for r in results), "total": len(results),
            "criteria": results}
    text = to_json(summ) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    if args.json or not args.out:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate, "corridors": cmd_corridors, "trace": cmd_trace, "tail": cmd_tail,
    "moment": cmd_moment, "corr": cmd_corr, "msd": cmd_msd, "ctime": cmd_ctime, "report": cmd_report,
}


def run(argv: Optional[List[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK
    t0 = time.perf_counter()
    try:
        p = None
        if args.command != "report" or any(
                getattr(args, k) is not None for k in ("preset", "a", "r", "disk_radius")):
            p = params_from_args(args)
            if args.command == "corridors":
                # corridor widths are closed-form and stay defined for overlapping scatterers
                validate_params(p).raise_for_errors(ignore=(TrappingConfiguration,))
            elif args.command != "validate":
                validate_params(p).raise_for_errors()
        code = COMMANDS[args.command](args, p)
    except (ConfigError, ParameterError) as e:
        sys.stderr.write(f"windtree {args.command}: {type(e).__name__}: {e}\n")
        return EXIT_CONFIG
    except S.InsufficientData as e:
        sys.stderr.write(f"windtree {args.command}: InsufficientData: {e}\n")
        return EXIT_INSUFFICIENT
    if args.timing:
        sys.stderr.write(f"runtime_s={time.perf_counter() - t0:.3f}\n")
    return code


def main() -> None:
    sys.exit(run())
