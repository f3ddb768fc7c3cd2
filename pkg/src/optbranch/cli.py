"""Command-line interface: ``optbranch <command> --network F ...``.

Exit codes: 0 success, 1 infeasible (or invalid network for ``validate``),
2 usage or input error.  Numbers are printed with 12 significant digits.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from typing import Optional

import numpy as np

from . import analysis as an
from .branch_exchange import algorithm1, loop_for_tie, ofr_bruteforce
from .io import BUNDLED, DEFAULT_Q_RATIO, ParseError, load_network, verify_bundled
from .netmodel import Network, NetworkError, validate_radial
from .opf import A2, AS_IS, Infeasible, NumericalFailure, Objective, OpfSettings, Unbounded, solve_opf
from .reconfig import greedy_reconfigure

DIGITS = 12


class UsageError(ValueError):
    pass


def _round(obj):
    """Round every float to 12 significant digits; infinities become ``null``."""
    if isinstance(obj, float):
        return None if not math.isfinite(obj) else float(f"{obj:.{DIGITS}g}")
    if isinstance(obj, (np.floating,)):
        return _round(float(obj))
    if isinstance(obj, dict):
        return {k: _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    return obj


def _fmt(x) -> str:
    return "" if x is None or not math.isfinite(x) else f"{x:.{DIGITS}g}"


def _emit_json(data, out):
    json.dump(_round(data), out, indent=1)
    out.write("\n")


def _emit_csv(header, rows, out):
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) if isinstance(v, float) else v for v in row])


def _pair(text: str) -> tuple:
    try:
        a, b = text.split("-")
        return int(a), int(b)
    except ValueError:
        raise UsageError(f"expected a line as A-B, got {text!r}") from None


def _grid(text: str) -> tuple:
    try:
        lo, hi, step = (float(t) for t in text.split(":"))
    except ValueError:
        raise UsageError(f"expected --grid lo:hi:step, got {text!r}") from None
    if step <= 0 or hi < lo:
        raise UsageError("--grid needs lo <= hi and step > 0")
    return lo, hi, step


def _settings(args) -> OpfSettings:
    return OpfSettings(mode=A2 if args.a2 else AS_IS)


def _tie(net: Network, args):
    if args.close:
        return net.find_line(*_pair(args.close))
    ties = net.open_lines
    if len(ties) != 1:
        raise UsageError(f"--close is required: the network has {len(ties)} open lines")
    return ties[0]


def _loop(net: Network, args):
    joined, path = loop_for_tie(net, _tie(net, args))
    return joined, path


def _name_back(joined: Network, key: tuple) -> list:
    """Line endpoints with virtual substations mapped back to their originals."""
    back = {b.id: b.virtual_of for b in joined.buses if b.virtual_of is not None}
    return [back.get(key[0], key[0]), back.get(key[1], key[1])]


# --- commands -----------------------------------------------------------------


def cmd_solve_opf(net, args, out):
    res = solve_opf(net, Objective.parse(args.objective), _settings(args))
    sb = net.base[1]
    data = {
        "objective_mw": res.objective * sb,
        "exact": res.exact,
        "max_soc_gap": res.max_soc_gap,
        "max_equation_residual": res.max_equation_residual,
        "iterations": res.iterations,
        "injections_mw": {str(s): res.injection(s) * sb for s in net.substations},
    }
    if args.full:
        data["point"] = res.x.to_dict()
    _emit_json(data, out)


def cmd_branch_exchange(net, args, out):
    joined, path = _loop(net, args)
    res = algorithm1(joined, path, Objective.parse(args.objective), _settings(args))
    sb = net.base[1]
    data = res.to_dict(sb)
    data["line"] = _name_back(joined, res.line)
    data["case_lines"] = [_name_back(joined, k) for k in res.case.lines]
    for c in data["candidate_costs_mw"]:
        c["line"] = _name_back(joined, tuple(c["line"]))
    data["path"] = [_name_back(joined, tuple(e)) for e in data["path"]]
    if args.format == "table":
        out.write(f"open line   {data['line'][0]}-{data['line'][1]}\n")
        out.write(f"case        {res.case.describe()}\n")
        out.write(f"OPF solves  {res.opf_solve_count}\n")
        for c in data["candidate_costs_mw"]:
            out.write(f"  cost of opening {c['line'][0]}-{c['line'][1]}: {_fmt(c['cost_mw'])} MW\n")
    else:
        _emit_json(data, out)


def cmd_enumerate(net, args, out):
    joined, path = _loop(net, args)
    bf = ofr_bruteforce(joined, path, Objective.parse(args.objective), _settings(args))
    sb = net.base[1]
    rows = []
    for key, cost in bf.costs.items():
        a, b = _name_back(joined, key)
        p0, p1 = bf.injections[key]
        rows.append((a, b, p0 * sb, p1 * sb, cost * sb))
    if args.format == "json":
        argmin = None if bf.argmin is None else _name_back(joined, bf.argmin)
        _emit_json(
            {
                "rows": [
                    {"from": a, "to": b, "p0_mw": p0, "p0p_mw": p1, "cost_mw": c} for a, b, p0, p1, c in rows
                ],
                "argmin": argmin,
            },
            out,
        )
    else:
        _emit_csv(("from", "to", "p0_mw", "p0p_mw", "cost_mw"), rows, out)


def cmd_reconfigure(net, args, out):
    trace = greedy_reconfigure(net, Objective.parse(args.objective), _settings(args))
    _emit_json(trace.to_dict(net.base[1]), out)


def _curve(joined, path, args, settings):
    sb = joined.base[1]
    if args.grid:
        lo, hi, step = _grid(args.grid)
        pts = an.grid(lo / sb, hi / sb, step / sb)
    else:
        lo, hi = an.feasible_interval(joined, (path.start, path.end), settings)
        pts = an.grid(lo, hi, args.step / sb)
    return an.sample_f_curve(joined, (path.start, path.end), pts, settings)


def cmd_f_curve(net, args, out):
    joined, path = _loop(net, args)
    curve = _curve(joined, path, args, _settings(args))
    _emit_csv(("p0_mw", "f_mw", "aggregate_mw"), curve.rows(), out)
    for p in curve.infeasible:
        print(f"p0 = {_fmt(p * net.base[1])} MW: infeasible", file=sys.stderr)
    for p, _, gap in curve.inexact:
        print(f"p0 = {_fmt(p * net.base[1])} MW: relaxation not exact (gap {gap:.3g}), left out", file=sys.stderr)


def cmd_analyze(net, args, out):
    settings = _settings(args)
    obj = Objective.parse(args.objective)
    joined, path = _loop(net, args)
    full = solve_opf(joined, obj, settings, roots=(path.start, path.end))
    volts = {b: float(full.x.v[i]) for i, b in enumerate(full.x.bus_ids)}
    consts = an.line_loss_constants(joined, path, volts)
    curve = _curve(joined, path, args, settings)
    sb = net.base[1]
    try:
        bound = an.suboptimality_bound(curve, consts, obj)
        bound_w = bound.watts
    except an.DegenerateBound:
        bound_w = math.inf
    chosen = algorithm1(joined, path, obj, settings)
    bf = ofr_bruteforce(joined, path, obj, settings)
    gap = bf.costs[chosen.line] - bf.best
    lc = consts.to_dict()
    _emit_json(
        {
            "kappa_f": curve.kappa_f_mw,  # per MW
            "lines": [_name_back(joined, tuple(e)) for e in consts.lines],
            "L_k": lc["L_k_pu"],
            "L_k_w": lc["L_k_w"],
            "R_k": lc["R_k"],
            "R": lc["R"],
            "bound_w": bound_w,
            "observed_gap_w": gap * sb * 1e6,
            "chosen_line": _name_back(joined, chosen.line),
        },
        out,
    )


def cmd_validate(net, args, out):
    report = validate_radial(net)
    problems = [] if report.ok else [report.describe()]
    if args.network in BUNDLED and not verify_bundled(args.network):
        problems.append(f"bundled {args.network} does not match its checksum")
    if problems:
        out.write("\n".join(problems) + "\n")
        return 1
    out.write("ok\n")
    return 0


COMMANDS = {
    "solve-opf": cmd_solve_opf,
    "branch-exchange": cmd_branch_exchange,
    "enumerate": cmd_enumerate,
    "reconfigure": cmd_reconfigure,
    "f-curve": cmd_f_curve,
    "analyze": cmd_analyze,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="optbranch", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help, loop=False, objective=True):
        p = sub.add_parser(name, help=help)
        p.add_argument("--network", required=True, help="JSON file or bundled name (sce56)")
        p.add_argument("--q-ratio", type=float, default=DEFAULT_Q_RATIO, help="load reactive range as a share of demand")
        p.add_argument("--a2", action="store_true", help="pin every voltage and free reactive power")
        if objective:
            p.add_argument("--objective", default="aggregate", help="aggregate | linear:c0,c0p | quadratic:c0,c0p,a0,a0p")
        if loop:
            p.add_argument("--close", help="open line A-B to close (default: the only open line)")
        return p

    p = add("solve-opf", "solve the relaxed OPF of the network as given")
    p.add_argument("--full", action="store_true", help="include the full operating point")
    p = add("branch-exchange", "pick the line to open after closing a tie", loop=True)
    p.add_argument("--format", choices=("json", "table"), default="json")
    p = add("enumerate", "cost of opening each line of the loop", loop=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    add("reconfigure", "greedy branch-exchange reconfiguration")
    for name, help in (("f-curve", "sample the injection trade-off curve"), ("analyze", "curvature, loss ratios and the gap bound")):
        p = add(name, help, loop=True, objective=name == "analyze")
        p.add_argument("--grid", help="lo:hi:step in MW (default: feasible interval)")
        p.add_argument("--step", type=float, default=0.05, help="grid step in MW when --grid is absent")
    add("validate", "check radiality (and the checksum of bundled data)", objective=False)
    return parser


def run_cli(argv: Optional[list] = None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        net = load_network(args.network, q_ratio=args.q_ratio)
        return COMMANDS[args.command](net, args, out) or 0
    except (UsageError, ParseError, NetworkError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (Infeasible, Unbounded) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 1
    except NumericalFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
