"""Greedy reconfiguration by repeated branch exchange.

Each sweep visits the open switches in ascending ``(from, to)`` order.  For
each one the loop it closes is handed to :func:`algorithm1`, and the chosen
line is opened in its place.  The search stops after a sweep that changes
nothing, or when a configuration repeats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .branch_exchange import algorithm1, loop_for_tie
from .netmodel import CLOSED, OPEN, Network, NetworkError, NotALoopThroughSubstation, validate_radial
from .opf import Objective, OpfSettings, solve_opf

COST_TOL = 1e-9  # p.u.; an exchange must not raise the cost by more than this


@dataclass
class ExchangeStep:
    tie: tuple  # open switch that was closed
    opened: tuple  # line opened in its place (== tie when nothing changes)
    case: str
    cost_before: float
    cost_after: float
    status: str  # "exchanged", "kept", "rejected" or "skipped"
    note: str = ""

    def to_dict(self, s_base: float = 1.0) -> dict:
        return {
            "tie": list(self.tie),
            "opened": list(self.opened),
            "case": self.case,
            "cost_before_mw": self.cost_before * s_base,
            "cost_after_mw": self.cost_after * s_base,
            "status": self.status,
            "note": self.note,
        }


@dataclass
class ReconfigTrace:
    steps: list = field(default_factory=list)
    open_lines: list = field(default_factory=list)  # final open switches
    converged: bool = False
    initial_cost: float = math.nan
    final_cost: float = math.nan
    network: Optional[Network] = None

    @property
    def exchanges(self) -> list:
        return [s for s in self.steps if s.status == "exchanged"]

    def to_dict(self, s_base: float = 1.0) -> dict:
        return {
            "converged": self.converged,
            "initial_cost_mw": self.initial_cost * s_base,
            "final_cost_mw": self.final_cost * s_base,
            "open_lines": [list(k) for k in self.open_lines],
            "steps": [s.to_dict(s_base) for s in self.steps],
        }


def configuration_cost(net: Network, obj: Objective, settings: Optional[OpfSettings] = None) -> float:
    """Optimal cost of a radial configuration."""
    return solve_opf(net, obj, settings).objective


def _original_line(net: Network, joined: Network, key: tuple) -> tuple:
    """Key in ``net`` of a line named in the (possibly virtually split) ``joined``."""
    a, b = key
    back = {bus.id: bus.virtual_of for bus in joined.buses if bus.virtual_of is not None}
    a, b = back.get(a, a), back.get(b, b)
    return net.find_line(a, b).key


def greedy_reconfigure(
    net: Network,
    obj: Optional[Objective] = None,
    settings: Optional[OpfSettings] = None,
    max_sweeps: int = 100,
) -> ReconfigTrace:
    """Branch-exchange local search from the radial configuration ``net``.

    An exchange that would raise the cost is rejected and the tie stays open.
    Ties whose loop does not pass through a substation are skipped.
    """
    obj = obj or Objective.aggregate()
    report = validate_radial(net)
    if not report.ok:
        raise NetworkError(f"initial configuration is not radial: {report.describe()}")
    cost = configuration_cost(net, obj, settings)
    trace = ReconfigTrace(initial_cost=cost)
    seen = {frozenset(ln.key for ln in net.open_lines)}
    for _ in range(max_sweeps):
        changed = False
        for key in sorted(ln.key for ln in net.open_lines):
            if net.find_line(*key).closed:
                continue  # reopened elsewhere in this sweep
            tie = net.find_line(*key)
            try:
                joined, path = loop_for_tie(net, tie)
            except NotALoopThroughSubstation as exc:
                trace.steps.append(ExchangeStep(key, key, "", cost, cost, "skipped", str(exc)))
                continue
            res = algorithm1(joined, path, obj, settings)
            chosen = _original_line(net, joined, res.line)
            if chosen == key:
                trace.steps.append(ExchangeStep(key, key, res.case.case, cost, cost, "kept"))
                continue
            cand = net.with_switch(tie, CLOSED).with_switch(net.find_line(*chosen), OPEN)
            new_cost = configuration_cost(cand, obj, settings)
            if new_cost > cost + COST_TOL:
                trace.steps.append(ExchangeStep(key, chosen, res.case.case, cost, new_cost, "rejected"))
                continue
            trace.steps.append(ExchangeStep(key, chosen, res.case.case, cost, new_cost, "exchanged"))
            net, cost, changed = cand, new_cost, True
            state = frozenset(ln.key for ln in net.open_lines)
            if state in seen:
                trace.steps[-1].note = "configuration revisited"
                return _finish(trace, net, cost, converged=False)
            seen.add(state)
        if not changed:
            return _finish(trace, net, cost, converged=True)
    return _finish(trace, net, cost, converged=False)


def _finish(trace, net, cost, converged):
    trace.open_lines = sorted(ln.key for ln in net.open_lines)
    trace.final_cost = cost
    trace.converged = converged
    trace.network = net
    return trace
