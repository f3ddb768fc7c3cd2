"""Second-order cone relaxation of optimal power flow on the branch-flow model.

The relaxed problem keeps the linear equations (real/reactive balance and
voltage drop), the operating limits, and replaces ``l v_i = P^2 + Q^2`` by the
rotated cone ``l v_i >= P^2 + Q^2``.
"""

from __future__ import annotations

import math
import os
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import socp
from .netmodel import Network
from .powerflow import OperatingPoint, residuals, soc_gaps

TOL_ENV = "OPTBRANCH_SOLVER_TOL"

AS_IS = "as_is"
A2 = "a2"


class OpfError(RuntimeError):
    pass


class Infeasible(OpfError):
    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate


class Unbounded(OpfError):
    pass


class NumericalFailure(OpfError):
    pass


def default_solver_settings() -> socp.SolverSettings:
    """Solver settings, with all three tolerances overridable via ``OPTBRANCH_SOLVER_TOL``."""
    tol = os.environ.get(TOL_ENV)
    if tol:
        t = float(tol)
        return socp.SolverSettings(tol_primal=t, tol_dual=t, tol_gap=t)
    # tight targets: the relative cone slack of lightly loaded lines is only
    # as small as the absolute slack the solver leaves behind
    return socp.SolverSettings(tol_primal=1e-12, tol_dual=1e-12, tol_gap=1e-14)


@dataclass(frozen=True)
class OpfSettings:
    solver: socp.SolverSettings = field(default_factory=default_solver_settings)
    # AS_IS uses the network's bounds.  A2 fixes every |V|^2 (buses with
    # pinned bounds keep their value, the rest get v_nominal) and frees q.
    mode: str = AS_IS
    v_nominal: float = 1.0
    exact_tol: float = 1e-6
    # a solve that stalls short of the solver targets is still accepted when
    # its best iterate meets these looser tolerances
    accept_tol: float = 1e-8

    def __post_init__(self):
        if self.mode not in (AS_IS, A2):
            raise ValueError(f"unknown OPF mode {self.mode!r}")


@dataclass(frozen=True)
class Objective:
    """Convex cost of the two substation injections ``(p0, p0')``.

    ``linear``: ``c0 p0 + c0p p0'``; ``aggregate``: sum of all substation
    injections; ``quadratic``: linear part plus ``a0 p0^2 + a0p p0'^2``
    (encoded with rotated cones).
    """

    kind: str = "aggregate"
    c0: float = 1.0
    c0p: float = 1.0
    a0: float = 0.0
    a0p: float = 0.0

    def __post_init__(self):
        if self.kind not in ("linear", "aggregate", "quadratic"):
            raise ValueError(f"unknown objective kind {self.kind!r}")
        if min(self.c0, self.c0p, self.a0, self.a0p) < 0:
            raise ValueError("objective coefficients must be nonnegative")

    @classmethod
    def aggregate(cls) -> "Objective":
        return cls("aggregate")

    @classmethod
    def linear(cls, c0: float, c0p: float) -> "Objective":
        return cls("linear", c0, c0p)

    @classmethod
    def parse(cls, text: str) -> "Objective":
        """Parse ``aggregate``, ``linear:c0,c0p`` or ``quadratic:c0,c0p,a0,a0p``."""
        kind, _, args = text.partition(":")
        vals = [float(a) for a in args.split(",")] if args else []
        if kind == "aggregate" and not vals:
            return cls.aggregate()
        if kind == "linear" and len(vals) == 2:
            return cls.linear(*vals)
        if kind == "quadratic" and len(vals) == 4:
            return cls("quadratic", *vals)
        raise ValueError(f"bad objective spec {text!r}")

    @property
    def is_linear(self) -> bool:
        return self.kind in ("linear", "aggregate")

    def __call__(self, p0: float, p0p: float) -> float:
        """Cost of a pair of injections; +inf if either side is infeasible."""
        if math.isinf(p0) or math.isinf(p0p):
            return math.inf
        if self.kind == "aggregate":
            return p0 + p0p
        val = self.c0 * p0 + self.c0p * p0p
        if self.kind == "quadratic":
            val += self.a0 * p0 * p0 + self.a0p * p0p * p0p
        return val

    def describe(self) -> str:
        if self.kind == "aggregate":
            return "aggregate"
        if self.kind == "linear":
            return f"linear:{self.c0:g},{self.c0p:g}"
        return f"quadratic:{self.c0:g},{self.c0p:g},{self.a0:g},{self.a0p:g}"


@dataclass
class Layout:
    """Column map of the assembled problem."""

    bus_ids: tuple
    line_keys: tuple
    p: np.ndarray
    q: np.ndarray
    v: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    l: np.ndarray
    extra: dict = field(default_factory=dict)

    def unpack(self, xv: np.ndarray) -> OperatingPoint:
        return OperatingPoint(
            bus_ids=self.bus_ids,
            line_keys=self.line_keys,
            p=xv[self.p],
            q=xv[self.q],
            P=xv[self.P],
            Q=xv[self.Q],
            l=xv[self.l],
            v=xv[self.v],
        )


@dataclass
class OpfResult:
    x: OperatingPoint
    objective: float
    exact: bool
    status: str
    iterations: int
    max_soc_gap: float
    max_equation_residual: float

    def injection(self, bus_id) -> float:
        return self.x.injection(bus_id)

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "objective": self.objective,
            "exact": self.exact,
            "iterations": self.iterations,
            "max_soc_gap": self.max_soc_gap,
            "max_equation_residual": self.max_equation_residual,
            "point": self.x.to_dict(),
        }


def _cost_roots(net: Network, roots) -> tuple:
    subs = net.substations
    if roots is not None:
        return tuple(roots)
    if len(subs) == 2:
        return tuple(subs)
    return tuple(subs)


def dead_lines(net: Network, settings: Optional[OpfSettings] = None) -> set:
    """Closed lines that can only carry zero flow.

    Repeatedly strips leaf buses (not substations) whose real and reactive
    injections are pinned at zero with no shunt capacitor.  Such lines would
    otherwise leave the cone with an arbitrary tiny ``l`` and a spurious slack.
    """
    settings = settings or OpfSettings()
    if settings.mode == A2:
        return set()
    idle = {
        b.id
        for b in net.buses
        if not b.is_substation and b.p_bounds == (0.0, 0.0) and b.q_bounds == (0.0, 0.0) and b.shunt_cap == 0
    }
    live = {ln.key: ln for ln in net.closed_lines}
    degree = {b.id: 0 for b in net.buses}
    for ln in live.values():
        degree[ln.from_bus] += 1
        degree[ln.to_bus] += 1
    dead = set()
    stack = [b for b in idle if degree[b] == 1]
    while stack:
        u = stack.pop()
        if degree[u] != 1:
            continue
        key = next(k for k in live if u in k)
        ln = live.pop(key)
        dead.add(key)
        degree[u] -= 1
        w = ln.other(u)
        degree[w] -= 1
        if w in idle and degree[w] == 1:
            stack.append(w)
    return dead


def assemble_sopf(
    net: Network,
    obj: Objective,
    settings: Optional[OpfSettings] = None,
    roots: Optional[tuple] = None,
    fixed: Optional[dict] = None,
    cost_weights: Optional[dict] = None,
):
    """Build the conic program for the relaxed OPF over the closed lines of ``net``.

    ``roots`` names the substations playing ``(0, 0')`` for linear/quadratic
    objectives.  ``fixed`` pins real injections ``{bus_id: p}``.
    ``cost_weights`` overrides the objective with ``sum w_b p_b``.
    Returns ``(ConicProblem, Layout)``.
    """
    settings = settings or OpfSettings()
    fixed = fixed or {}
    buses = net.buses
    lines = net.closed_lines
    nb, nl = len(buses), len(lines)
    pos = {b.id: i for i, b in enumerate(buses)}

    col = iter(range(10**9))
    take = lambda k: np.array([next(col) for _ in range(k)], dtype=int)
    lay = Layout(
        bus_ids=tuple(b.id for b in buses),
        line_keys=tuple(ln.key for ln in lines),
        p=take(nb),
        q=take(nb),
        v=take(nb),
        P=take(nl),
        Q=take(nl),
        l=take(nl),
    )

    # objective
    subs = net.substations
    weights = {}
    quad = {}
    if cost_weights is not None:
        weights = dict(cost_weights)
    elif obj.kind == "aggregate":
        weights = {s: 1.0 for s in subs}
    else:
        r = _cost_roots(net, roots)
        if len(r) < 1 or len(r) > 2:
            raise ValueError("linear objectives need one or two designated substations")
        coef = (obj.c0, obj.c0p)
        qcoef = (obj.a0, obj.a0p)
        for k, s in enumerate(r):
            weights[s] = weights.get(s, 0.0) + coef[k]
            if obj.kind == "quadratic" and qcoef[k] > 0:
                quad[s] = qcoef[k]
    for s in quad:
        lay.extra[s] = next(col)
    n = next(col)

    c = np.zeros(n)
    for s, w in weights.items():
        c[lay.p[pos[s]]] += w
    for s, a in quad.items():
        c[lay.extra[s]] += a

    A_rows, b_vals = [], []

    def eq(coeffs, rhs):
        row = np.zeros(n)
        for j, val in coeffs:
            row[j] += val
        A_rows.append(row)
        b_vals.append(rhs)

    # power balance at each bus
    out_lines = {b.id: [] for b in buses}
    in_lines = {b.id: [] for b in buses}
    for k, ln in enumerate(lines):
        out_lines[ln.from_bus].append((k, ln))
        in_lines[ln.to_bus].append((k, ln))
    for b in buses:
        i = pos[b.id]
        cp = [(lay.p[i], -1.0)]
        cq = [(lay.q[i], -1.0)]
        for k, ln in out_lines[b.id]:
            cp.append((lay.P[k], 1.0))
            cq.append((lay.Q[k], 1.0))
        for k, ln in in_lines[b.id]:
            cp += [(lay.P[k], -1.0), (lay.l[k], ln.r)]
            cq += [(lay.Q[k], -1.0), (lay.l[k], ln.x)]
        eq(cp, 0.0)
        eq(cq, 0.0)
    # voltage drop along each line
    for k, ln in enumerate(lines):
        i, j = pos[ln.from_bus], pos[ln.to_bus]
        eq([(lay.v[j], 1.0), (lay.v[i], -1.0), (lay.P[k], 2 * ln.r), (lay.Q[k], 2 * ln.x), (lay.l[k], -ln.z2)], 0.0)

    # operating limits: equalities for pinned quantities, inequalities otherwise
    G_rows, h_vals = [], []

    def leq(j, bound, sign=1.0):
        row = np.zeros(n)
        row[j] = sign
        G_rows.append(row)
        h_vals.append(sign * bound)

    def box(j, lo, hi):
        if lo == hi:
            eq([(j, 1.0)], lo)
            return
        if math.isfinite(hi):
            leq(j, hi, 1.0)
        if math.isfinite(lo):
            leq(j, lo, -1.0)

    a2 = settings.mode == A2
    for b in buses:
        i = pos[b.id]
        if b.id in fixed:
            lo, hi = b.p_bounds
            if not lo - 1e-12 <= fixed[b.id] <= hi + 1e-12:
                raise Infeasible(f"pinned injection {fixed[b.id]:g} at bus {b.id} is outside [{lo:g}, {hi:g}]")
            eq([(lay.p[i], 1.0)], fixed[b.id])
        else:
            box(lay.p[i], *b.p_bounds)
        if a2:
            vl, vu = b.v_bounds
            eq([(lay.v[i], 1.0)], vl if vl == vu else settings.v_nominal)
        else:
            ql, qu = b.q_bounds
            box(lay.q[i], ql, qu + b.shunt_cap)
            box(lay.v[i], *b.v_bounds)
    dead = dead_lines(net, settings)
    for k, ln in enumerate(lines):
        if ln.key in dead:
            for j in (lay.P[k], lay.Q[k], lay.l[k]):
                eq([(j, 1.0)], 0.0)
        elif math.isfinite(ln.l_max):
            leq(lay.l[k], ln.l_max)
    n_lin = len(G_rows)

    # rotated cones: (l + v_i, 2P, 2Q, l - v_i) in Q^4
    cones = []
    for k, ln in enumerate(lines):
        if ln.key in dead:
            continue
        i = pos[ln.from_bus]
        blk = np.zeros((4, n))
        blk[0, lay.l[k]] = blk[0, lay.v[i]] = -1.0
        blk[1, lay.P[k]] = -2.0
        blk[2, lay.Q[k]] = -2.0
        blk[3, lay.l[k]] = -1.0
        blk[3, lay.v[i]] = 1.0
        cones.append(blk)
    # epigraph of quadratic costs: t >= p^2  <=>  (t + 1, 2p, t - 1) in Q^3
    for s, j in lay.extra.items():
        blk = np.zeros((3, n))
        blk[0, j] = -1.0
        blk[1, lay.p[pos[s]]] = -2.0
        blk[2, j] = -1.0
        cones.append(blk)
    G = np.vstack(G_rows + cones) if (G_rows or cones) else np.zeros((0, n))
    h = np.zeros(G.shape[0])
    h[:n_lin] = h_vals
    off = n_lin
    for blk in cones:
        if blk.shape[0] == 3:
            h[off] = 1.0
            h[off + 2] = -1.0
        off += blk.shape[0]
    dims = {"l": n_lin, "q": [blk.shape[0] for blk in cones]}

    names = [""] * n
    for i, b in enumerate(buses):
        names[lay.p[i]] = f"p[{b.id}]"
        names[lay.q[i]] = f"q[{b.id}]"
        names[lay.v[i]] = f"v[{b.id}]"
    for k, ln in enumerate(lines):
        names[lay.P[k]] = f"P{ln.key}"
        names[lay.Q[k]] = f"Q{ln.key}"
        names[lay.l[k]] = f"l{ln.key}"
    for s, j in lay.extra.items():
        names[j] = f"t[{s}]"

    A = np.array(A_rows) if A_rows else np.zeros((0, n))
    prob = socp.ConicProblem(c=c, G=G, h=h, dims=dims, A=A, b=np.array(b_vals), names=names)
    return prob, lay


def _acceptable(sol: socp.ConicSolution, tol: float) -> bool:
    if sol.x is None or not np.isfinite(sol.primal_objective):
        return False
    relgap = sol.gap / max(abs(sol.primal_objective), abs(sol.dual_objective), 1.0)
    return sol.primal_residual <= tol and sol.dual_residual <= tol and min(sol.gap, relgap) <= tol


_recorders: list = []


@contextmanager
def record_solves():
    """Collect ``(network, result)`` for every successful OPF solve in the block."""
    log: list = []
    _recorders.append(log)
    try:
        yield log
    finally:
        _recorders.remove(log)


def _run(net, prob, lay, settings) -> OpfResult:
    sol = socp.solve(prob, settings.solver)
    if sol.status == socp.NUMERICAL_FAILURE and _acceptable(sol, settings.accept_tol):
        sol = replace(sol, status=socp.OPTIMAL)
    if sol.status == socp.INFEASIBLE:
        raise Infeasible(f"OPF on {len(net.buses)} buses is infeasible", certificate=(sol.y, sol.z))
    if sol.status == socp.UNBOUNDED:
        raise Unbounded("OPF objective is unbounded below")
    if sol.status != socp.OPTIMAL:
        raise NumericalFailure(f"solver stopped with status {sol.status} after {sol.iterations} iterations")
    x = lay.unpack(sol.x)
    gaps = soc_gaps(net, x)
    rep = residuals(net, x)
    max_gap = float(np.max(gaps, initial=0.0))
    result = OpfResult(
        x=x,
        objective=float(sol.primal_objective),
        exact=max_gap <= settings.exact_tol,
        status=sol.status,
        iterations=sol.iterations,
        max_soc_gap=max_gap,
        max_equation_residual=rep.max_equation_residual,
    )
    for log in _recorders:
        log.append((net, result))
    return result


def solve_opf(
    net: Network,
    obj: Optional[Objective] = None,
    settings: Optional[OpfSettings] = None,
    roots: Optional[tuple] = None,
) -> OpfResult:
    """Solve the relaxed OPF; raises Infeasible / Unbounded / NumericalFailure."""
    settings = settings or OpfSettings()
    prob, lay = assemble_sopf(net, obj or Objective.aggregate(), settings, roots=roots)
    return _run(net, prob, lay, settings)


def solve_weighted(net: Network, weights: dict, settings: Optional[OpfSettings] = None) -> OpfResult:
    """Minimize ``sum w_b p_b`` over the relaxed feasible set."""
    settings = settings or OpfSettings()
    prob, lay = assemble_sopf(net, Objective.aggregate(), settings, cost_weights=weights)
    return _run(net, prob, lay, settings)


def min_injection(sub: Network, root: int, settings: Optional[OpfSettings] = None) -> float:
    """Minimum real injection of substation ``root`` that serves ``sub``."""
    return solve_weighted(sub, {root: 1.0}, settings).injection(root)


def solve_opf_fixed_p0(
    net: Network, p0: float, roots: tuple, settings: Optional[OpfSettings] = None
) -> OpfResult:
    """Pin substation ``roots[0]`` at ``p0`` and minimize the injection of ``roots[1]``.

    The optimal value is ``f(p0)``, available as ``result.objective``.
    """
    settings = settings or OpfSettings()
    s0, s1 = roots
    prob, lay = assemble_sopf(net, Objective.aggregate(), settings, fixed={s0: p0}, cost_weights={s1: 1.0})
    return _run(net, prob, lay, settings)
