"""Command-line interface.

Every command writes one document carrying a ``params`` block that is enough
to re-run it.  Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import calibration as cal
from . import design_rules as dr
from . import equilibrium_sim as sim
from . import manipulation_rules as mr
from . import reports
from ._errors import DomainError, InfeasibleError, NumericalError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
SIG_DIGITS = 12


class ValidationError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def _clean(obj):
    """Round floats to 12 significant digits and make the tree JSON-safe."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return None
        return float(f"{x:.{SIG_DIGITS}g}")
    if hasattr(obj, "value") and hasattr(obj, "name"):
        return obj.value
    return obj


def render_json(doc: dict) -> str:
    return json.dumps(_clean(doc), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _flatten(prefix, obj, out):
    if isinstance(obj, dict):
        for k in sorted(obj):
            _flatten(f"{prefix}.{k}" if prefix else str(k), obj[k], out)
    elif isinstance(obj, list) and obj and isinstance(obj[0], (dict, list)):
        for i, v in enumerate(obj):
            _flatten(f"{prefix}.{i}", v, out)
    else:
        out[prefix] = obj


def render_csv(doc: dict) -> str:
    """``key,value`` rows, lists joined by ';', preceded by a params comment line."""
    clean = _clean(doc)
    flat = {}
    _flatten("", clean["results"], flat)
    buf = io.StringIO()
    buf.write("# params " + json.dumps(clean["params"], sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["key", "value"])
    for k, v in flat.items():
        if isinstance(v, list):
            v = ";".join("" if x is None else repr(x) for x in v)
        elif v is None:
            v = ""
        w.writerow([k, v])
    return buf.getvalue()


# -- argument helpers -----------------------------------------------------

def _positive(s):
    x = _float(s)
    if not x > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {s}")
    return x


def _nonneg(s):
    x = _float(s)
    if not x >= 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {s}")
    return x


def _unit(s):
    x = _float(s)
    if not 0 <= x <= 1:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {s}")
    return x


def _float(s):
    try:
        x = float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {s}") from None
    if not math.isfinite(x):
        raise argparse.ArgumentTypeError(f"must be finite, got {s}")
    return x


def _count(s):
    try:
        n = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {s}") from None
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {s}")
    return n


def _seed(s):
    try:
        n = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {s}") from None
    if n < 0:
        raise argparse.ArgumentTypeError(f"seed must be non-negative, got {s}")
    return n


def _add_output(p):
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--format", choices=("json", "csv"), default="json")


def _add_manip_env(p, need_ca=True):
    p.add_argument("--eta2", type=_positive, required=True)
    p.add_argument("--s2", type=_nonneg, default=1.0)
    p.add_argument("--cm", type=_positive, required=True)
    p.add_argument("--c0", type=_unit, default=0.0)
    g = p.add_mutually_exclusive_group(required=need_ca)
    g.add_argument("--ca", type=_positive)
    g.add_argument("--cutoff-target", type=_positive,
                   help="set ca so the no-manipulation cutoff equals this value")


def _manip_env(args) -> mr.ManipulationEnv:
    if args.cutoff_target is not None:
        return mr.ManipulationEnv.from_cutoff(args.eta2, args.s2, args.cm, args.cutoff_target, args.c0)
    return mr.ManipulationEnv(args.eta2, args.s2, args.ca, args.cm, args.c0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pubrules", description="Optimal publication rules toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("rule", help="optimal threshold rule for one design")
    p.add_argument("--eta2", type=_positive, required=True)
    p.add_argument("--ca", type=_nonneg, required=True)
    p.add_argument("--s2", type=_nonneg, required=True)
    p.add_argument("--cost", type=_unit, default=0.0)
    _add_output(p)

    p = sub.add_parser("compare", help="planner preference between two designs")
    p.add_argument("--eta2", type=_positive, required=True)
    p.add_argument("--ca", type=_nonneg, required=True)
    p.add_argument("--s2-e", type=_nonneg, required=True)
    p.add_argument("--cost-e", type=_unit, default=0.0)
    p.add_argument("--s2-o", type=_nonneg)
    p.add_argument("--cost-o", type=_unit, default=0.0)
    p.add_argument("--sweep", nargs=3, type=_nonneg, metavar=("LO", "HI", "STEP"),
                   help="indifference cost of E over a grid of s2_o values")
    _add_output(p)

    p = sub.add_parser("optimize", help="optimal rule under manipulation")
    _add_manip_env(p)
    _add_output(p)

    p = sub.add_parser("simulate", help="Monte Carlo summary for one rule and policy")
    _add_manip_env(p)
    p.add_argument("--rule", choices=("naive", "optimal", "threshold", "smoothed"), default="optimal")
    p.add_argument("--cutoff", type=_positive, help="cutoff for threshold/smoothed rules")
    p.add_argument("--slope", type=_positive, help="ramp slope for smoothed rules")
    p.add_argument("--policy", choices=[x.value for x in mr.Policy], default="best_respond")
    p.add_argument("--n", type=_count, default=1_000_000)
    p.add_argument("--seed", type=_seed, default=0)
    _add_output(p)

    p = sub.add_parser("table2", help="calibrated summary table")
    p.add_argument("--calibration", choices=("five_pct", "one_pct", "both"), default="both")
    p.add_argument("--n", type=_count, default=1_000_000)
    p.add_argument("--seed", type=_seed, default=0)
    _add_output(p)

    p = sub.add_parser("figure-data", help="data series for figures")
    p.add_argument("figure", choices=("fig2", "fig3", "fig4", "fig5"))
    p.add_argument("--n", type=_count, default=1_000_000)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--bin-width", type=_positive, default=reports.DEFAULT_BIN_WIDTH)
    _add_output(p)

    p = sub.add_parser("calibrate", help="calibrate parameters from a p-value file")
    p.add_argument("--input", required=True, help="delimited file with a p_value column")
    p.add_argument("--level", choices=[x.value for x in cal.Level], default="five_pct")
    p.add_argument("--window", nargs=2, type=_nonneg, metavar=("LO", "HI"))
    p.add_argument("--unpublished-share", type=_unit, default=0.36)
    p.add_argument("--prereg-share", type=_unit, default=0.27)
    p.add_argument("--raw-share", type=_unit, help="override the measured bunching share")
    p.add_argument("--cm-scale", choices=cal.CM_SCALES, default="standard")
    p.add_argument("--eta2-divisor", choices=("approx", "exact"), default="approx")
    _add_output(p)
    return parser


# -- commands --------------------------------------------------------------

def cmd_rule(args):
    env = dr.Environment(args.eta2, args.ca)
    d = dr.Design(args.s2, args.cost)
    w = dr.is_worthwhile(env, d)
    return {
        "cutoff": dr.optimal_cutoff(env, d).cutoff,
        "gamma_star": dr.gamma_star(env, d),
        "publication_mass": dr.optimal_mass(env, d),
        "loss": dr.optimal_loss(env, d),
        "design_class": w.design_class,
        "worthwhile": w.worthwhile,
        "incentive_cost": dr.incentive_cost(env, d),
    }


def cmd_compare(args):
    env = dr.Environment(args.eta2, args.ca)
    out = {}
    if args.s2_o is None and args.sweep is None:
        raise ValidationError("compare needs --s2-o or --sweep")
    if args.s2_o is not None:
        c = dr.compare_designs(env, dr.Design(args.s2_e, args.cost_e), dr.Design(args.s2_o, args.cost_o))
        out["comparison"] = {
            "preference": c.preference,
            "loss_e": c.loss_e,
            "loss_o": c.loss_o,
            "diagnostics": asdict(c.diagnostics) if c.diagnostics else None,
        }
    if args.sweep is not None:
        lo, hi, step = args.sweep
        if not (step > 0 and hi >= lo):
            raise ValidationError("--sweep needs LO <= HI and STEP > 0")
        grid = lo + step * np.arange(int(math.floor((hi - lo) / step + 1e-9)) + 1)
        pts = dr.indifference_curve(env, args.s2_e, grid, cost_o=args.cost_o)
        out["indifference"] = {"s2_o": [p[0] for p in pts], "cost_e": [p[1] for p in pts]}
    return out


def cmd_optimize(args):
    env = _manip_env(args)
    sol = mr.optimize_rule(env)
    return {
        "ca": env.ca,
        "gamma_star": env.gamma_star,
        "u_star": sol.u_star,
        "x_star": sol.x_star,
        "expected_loss": sol.expected_loss,
        "slope": sol.slope,
        "ramp_start": sol.rule.ramp_start,
    }


def _simulate_rule(args, env):
    if args.rule == "naive":
        return dr.ThresholdRule(env.gamma_star)
    if args.rule == "optimal":
        return mr.optimize_rule(env).rule
    if args.cutoff is None:
        raise ValidationError(f"--rule {args.rule} needs --cutoff")
    if args.rule == "threshold":
        return dr.ThresholdRule(args.cutoff)
    return mr.SmoothedRule(args.cutoff, args.slope if args.slope is not None else env.cm)


def cmd_simulate(args):
    env = _manip_env(args)
    rule = _simulate_rule(args, env)
    policy = mr.Policy(args.policy)
    pop = sim.sample_population(env, args.n, args.seed)
    recs = sim.simulate_equilibrium(env, rule, policy, pop, args.seed)
    m = mr.rule_moments(env, rule, policy)
    return {
        "rule": reports.rule_description(rule),
        "ca": env.ca,
        "monte_carlo": asdict(sim.summarize(recs)),
        "quadrature": {
            "expected_loss": m.expected_loss,
            "pct_published": m.published,
            "pct_manipulated_within_published": m.manipulated_share,
            "avg_abs_bias_within_published": m.avg_bias,
        },
        "rng": sim.RNG_ALGORITHM,
    }


def cmd_table2(args):
    names = ("five_pct", "one_pct") if args.calibration == "both" else (args.calibration,)
    return {"rng": sim.RNG_ALGORITHM,
            "tables": [reports.table2_rows(reports.CALIBRATIONS[k], args.n, args.seed) for k in names]}


def cmd_figure_data(args):
    if args.figure == "fig2":
        return reports.fig2_data()
    if args.figure == "fig3":
        return reports.fig3_data(args.n, args.seed, args.bin_width)
    if args.figure == "fig4":
        return reports.fig4_data()
    return reports.fig5_data(args.n, args.seed, width=args.bin_width)


def cmd_calibrate(args):
    level = cal.Level(args.level)
    try:
        cfg = cal.CalibrationConfig(
            level=level,
            bunch_window=tuple(args.window) if args.window else None,
            unpublished_share=args.unpublished_share,
            prereg_share=args.prereg_share,
            raw_bunch_share_override=args.raw_share,
            cm_scale=args.cm_scale,
            eta2_divisor=args.eta2_divisor,
        )
    except DomainError as e:
        raise ValidationError(str(e)) from None
    data = cal.read_pvalues(args.input)
    return cal.calibrate_pipeline(data, cfg).report()


COMMANDS = {
    "rule": cmd_rule,
    "compare": cmd_compare,
    "optimize": cmd_optimize,
    "simulate": cmd_simulate,
    "table2": cmd_table2,
    "figure-data": cmd_figure_data,
    "calibrate": cmd_calibrate,
}


def _params(args) -> dict:
    skip = {"out", "format"}
    return {"command": args.command, **{k: v for k, v in sorted(vars(args).items())
                                         if k not in skip and k != "command"}}


def _fail(code: int, kind: str, message: str) -> int:
    msg = " ".join(str(message).split())
    sys.stderr.write(json.dumps({"error": kind, "message": msg}, sort_keys=True) + "\n")
    return code


def dispatch(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        results = COMMANDS[args.command](args)
        doc = {"params": _params(args), "results": results}
        text = render_json(doc) if args.format == "json" else render_csv(doc)
        if args.out:
            Path(args.out).write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
    except (ValidationError, DomainError, InfeasibleError) as e:
        return _fail(EXIT_VALIDATION, "validation", e)
    except OSError as e:
        return _fail(EXIT_VALIDATION, "io", e)
    except NumericalError as e:
        return _fail(EXIT_NUMERICAL, "numerical", e)
    return EXIT_OK


def main() -> None:
    sys.exit(dispatch())
