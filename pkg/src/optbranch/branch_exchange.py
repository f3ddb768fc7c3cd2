"""Choosing the line to open on a substation-to-substation path.

:func:`algorithm1` solves the OPF of the joined network once, reads the sign
pattern of the real power flows along the path and, only when some bus is fed
from both sides, compares the two adjacent cuts with one more OPF each.
:func:`ofr_bruteforce` is the enumeration oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .netmodel import CLOSED, Line, Network, NotALoopThroughSubstation, Path, components, find_path, split_at_line, virtual_split
from .opf import Infeasible, Objective, OpfResult, OpfSettings, min_injection, solve_opf
from .powerflow import OperatingPoint

SIGN_TOL = 1e-7  # |P| below this (p.u.) counts as zero when reading signs
COST_TIE_TOL = 1e-8  # candidate costs closer than this (p.u.) are treated as equal

C1, C2, C3, C4 = "C1", "C2", "C3", "C4"


class AmbiguousClassification(RuntimeError):
    pass


@dataclass(frozen=True)
class CaseLabel:
    """Which sign pattern the full-network optimum shows along the path.

    ``lines`` holds the line keys named by the case: the cut line for C1-C3,
    the two lines ``(k1,k2), (k2,k3)`` around bus ``k2`` for C4.
    """

    case: str
    lines: tuple = ()
    bus: Optional[int] = None

    def describe(self) -> str:
        if self.case == C4:
            return f"C4 at bus {self.bus}"
        if self.case == C3:
            return f"C3 on line {self.lines[0]}"
        return self.case


@dataclass
class ExchangeResult:
    line: tuple  # key of the line to open
    case: CaseLabel
    opf_solve_count: int
    candidate_costs: dict = field(default_factory=dict)  # line key -> cost (p.u.)
    full: Optional[OpfResult] = None
    path: Optional[Path] = None

    def to_dict(self, s_base: float = 1.0) -> dict:
        return {
            "line": list(self.line),
            "case": self.case.case,
            "case_bus": self.case.bus,
            "case_lines": [list(k) for k in self.case.lines],
            "opf_solve_count": self.opf_solve_count,
            "candidate_costs_mw": [
                {"line": list(k), "cost_mw": _finite(c * s_base)} for k, c in self.candidate_costs.items()
            ],
            "full_objective_mw": None if self.full is None else self.full.objective * s_base,
            "full_exact": None if self.full is None else self.full.exact,
            "path": [] if self.path is None else [list(e) for e in self.path.edges()],
        }


def _finite(v):
    return None if math.isinf(v) else v


def path_flows(net: Network, path: Path, x: OperatingPoint) -> list:
    """``[(P_ab, P_ba)]`` for each path step traversed from ``a`` to ``b``."""
    return [(x.flow(a, b, net), x.flow(b, a, net)) for a, b in path.edges()]


def flow_sequence(net: Network, path: Path, x: OperatingPoint) -> list:
    """The sequence ``P_01, -P_10, P_12, -P_21, ...`` along the path."""
    seq = []
    for fwd, back in path_flows(net, path, x):
        seq += [fwd, -back]
    return seq


def descending_ok(seq, tol: float = SIGN_TOL) -> bool:
    """Nonincreasing up to ``tol`` with no three consecutive (near-)equal elements."""
    for u, w in zip(seq, seq[1:]):
        if w > u + tol:
            return False
    for u, w, t in zip(seq, seq[1:], seq[2:]):
        if abs(u - w) <= tol and abs(w - t) <= tol:
            return False
    return True


def classify_case(net: Network, path: Path, x: OperatingPoint, tol: float = SIGN_TOL) -> CaseLabel:
    """Read the case from the flows of an optimal point along ``path``.

    Precedence when tolerances let several cases match: C1, C2, C3, C4.
    Several distinct C3 lines (or C4 buses) raise :class:`AmbiguousClassification`.
    """
    if len(path) == 0:
        raise ValueError("empty path")
    flows = path_flows(net, path, x)
    edges = path.edges()
    if flows[0][0] <= tol:
        return CaseLabel(C1, (path.steps[0].line.key,))
    if flows[-1][0] >= -tol:
        return CaseLabel(C2, (path.steps[-1].line.key,))
    c3 = [path.steps[k].line.key for k, (f, b) in enumerate(flows) if f >= -tol and b >= -tol]
    if len(c3) > 1:
        raise AmbiguousClassification(f"lines {c3} all carry power in from both ends")
    if c3:
        return CaseLabel(C3, (c3[0],))
    c4 = []
    for k in range(1, len(edges)):
        # bus edges[k][0] sits between steps k-1 and k
        if flows[k - 1][1] <= tol and flows[k][0] <= tol:
            c4.append(k)
    if len(c4) > 1:
        raise AmbiguousClassification(f"buses {[edges[k][0] for k in c4]} are all fed from both sides")
    if not c4:
        raise AmbiguousClassification("no case matches; flows are not consistent with an optimum")
    k = c4[0]
    return CaseLabel(C4, (path.steps[k - 1].line.key, path.steps[k].line.key), bus=edges[k][0])


def split_network(net: Network, path: Path, line: Line) -> Network:
    """The two subtrees left after opening ``line``, as one disconnected network."""
    s0, s1 = split_at_line(net, path, line)
    return net.subnetwork(set(s0.bus_ids) | set(s1.bus_ids), s0.lines + s1.lines)


def split_cost(net: Network, path: Path, line: Line, obj: Objective, settings: Optional[OpfSettings] = None) -> float:
    """Cost of opening ``line``: one OPF over both subtrees; +inf if infeasible."""
    sub = split_network(net, path, line)
    try:
        res = solve_opf(sub, obj, settings, roots=(path.start, path.end))
    except Infeasible:
        return math.inf
    return _gamma(obj, sub, res.x, path)


def _gamma(obj: Objective, net: Network, x: OperatingPoint, path: Path) -> float:
    if obj.kind == "aggregate":
        return float(sum(x.injection(s) for s in net.substations))
    return obj(x.injection(path.start), x.injection(path.end))


def algorithm1(
    net: Network, path: Path, obj: Optional[Objective] = None, settings: Optional[OpfSettings] = None
) -> ExchangeResult:
    """Pick the line on ``path`` to open, using at most three OPF solves.

    ``net`` is the joined network (the path closed, one substation at each
    end).  An infeasible joined OPF raises :class:`Infeasible`; an infeasible
    split is ranked at +inf.
    """
    obj = obj or Objective.aggregate()
    full = solve_opf(net, obj, settings, roots=(path.start, path.end))
    case = classify_case(net, path, full.x)
    if case.case != C4:
        return ExchangeResult(case.lines[0], case, 1, {}, full, path)
    lines = {ln.key: ln for ln in path.lines}
    first, second = case.lines
    costs = {key: split_cost(net, path, lines[key], obj, settings) for key in (first, second)}
    # ties go to the second line, as the >= comparison prescribes
    chosen = second if costs[first] >= costs[second] - COST_TIE_TOL else first
    return ExchangeResult(chosen, case, 3, costs, full, path)


@dataclass
class BruteForceResult:
    costs: dict  # line key -> cost (p.u.), in path order
    argmin: Optional[tuple]
    injections: dict = field(default_factory=dict)  # line key -> (p0, p0')

    @property
    def best(self) -> float:
        return min(self.costs.values(), default=math.inf)

    def near_optimal(self, tol: float = COST_TIE_TOL) -> list:
        """Every line whose cost is within ``tol`` of the minimum."""
        best = self.best
        return [k for k, c in self.costs.items() if c <= best + tol]


def ofr_bruteforce(
    net: Network, path: Path, obj: Optional[Objective] = None, settings: Optional[OpfSettings] = None
) -> BruteForceResult:
    """Open each path line in turn and cost it with two minimum-injection solves."""
    obj = obj or Objective.aggregate()
    costs, inj = {}, {}
    for ln in path.lines:
        s0, s1 = split_at_line(net, path, ln)
        try:
            p0 = min_injection(s0, path.start, settings)
        except Infeasible:
            p0 = math.inf
        try:
            p1 = min_injection(s1, path.end, settings)
        except Infeasible:
            p1 = math.inf
        inj[ln.key] = (p0, p1)
        costs[ln.key] = obj(p0, p1)
    finite = {k: c for k, c in costs.items() if math.isfinite(c)}
    argmin = min(finite, key=finite.get) if finite else None
    return BruteForceResult(costs, argmin, inj)


def loop_for_tie(net: Network, tie: Line) -> tuple:
    """Close ``tie`` and return ``(joined network, path from 0 to 0')``.

    Ties between two feeders of one substation go through :func:`virtual_split`.
    """
    tie = net.find_line(tie.from_bus, tie.to_bus)
    opened = net.with_switch(tie, "open")
    owner = {}
    for comp in components(opened):
        subs = [b for b in comp if opened.bus(b).is_substation]
        for b in comp:
            owner[b] = subs[0] if len(subs) == 1 else None
    s_from, s_to = owner.get(tie.from_bus), owner.get(tie.to_bus)
    if s_from is None or s_to is None:
        raise NotALoopThroughSubstation(f"an end of {tie.key} is not served by exactly one substation")
    if s_from != s_to:
        joined = net.with_switch(tie, CLOSED)
        return joined, find_path(joined, s_from, s_to)
    joined = virtual_split(net, s_from, tie)
    virtual = max(joined.bus_ids)
    return joined, find_path(joined, s_from, virtual)
