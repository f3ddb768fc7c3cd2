"""Structure of the two-substation value function and the suboptimality bound.

``f(p0)`` is the least injection substation 0' needs when substation 0
injects ``p0``.  Sampled over ``p0`` it gives the curvature estimate
``kappa_f``; together with the per-line constants ``L_k`` and ``R_k`` it
bounds how far the branch-exchange choice can be from the best cut:
``max(c0^2/c0', c0'^2/c0) * 2 / (R^2 kappa_f)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .netmodel import Line, Network, Path, split_at_line
from .opf import Infeasible, Objective, OpfSettings, min_injection, solve_opf_fixed_p0, solve_weighted

CROSS_TOL = 1e-7  # |P| at a reported crossing, p.u.
CROSS_MAXITER = 60


class OutOfA3Range(ValueError):
    pass


class ComplexDiscriminant(ValueError):
    pass


class NoCrossing(ValueError):
    pass


class DegenerateBound(ValueError):
    pass


# --- single-line maps ---------------------------------------------------------


def line_state(line: Line, v_i: float, v_j: float, P: float) -> tuple:
    """``(Q, l)`` on a line with both voltages fixed and sending power ``P``.

    Eliminating ``l`` between the voltage-drop equation and ``l v_i = P^2 + Q^2``
    leaves a quadratic in ``Q``; the root with the smaller current is the one
    whose angle satisfies ``|theta| < arctan(x/r)``.
    """
    z2 = line.z2
    a = v_i * line.x / z2
    disc = a * a - P * P + v_i * (v_j - v_i + 2 * line.r * P) / z2
    if disc < 0:
        raise OutOfA3Range(f"no operating point carries P={P:g} between v={v_i:g} and v={v_j:g}")
    Q = a - math.sqrt(disc)
    l = (P * P + Q * Q) / v_i
    return Q, l


def _angle(line: Line, v_i: float, v_j: float, P: float) -> float:
    """``theta_i - theta_j`` from ``P = v_i r/|z|^2 + sqrt(v_i v_j)/|z| sin(theta - beta)``."""
    z2 = line.z2
    beta = math.atan2(line.r, line.x)
    s = (P - v_i * line.r / z2) / math.sqrt(v_i * v_j / z2)
    if abs(s) > 1:
        raise OutOfA3Range(f"P={P:g} is beyond the line's transfer limit")
    return beta + math.asin(s)


def phi(line: Line, v_i: float, v_j: float, P: float, check: bool = True) -> float:
    """Real power delivered at the far end, ``-P_ji = P - l r``, for sending power ``P``.

    Computed from the line equations; with ``check`` the closed form
    ``-v_j r/|z|^2 + sqrt(v_i v_j)/|z| sin(theta + beta)`` must agree to 1e-9.
    """
    _, l = line_state(line, v_i, v_j, P)
    theta = _angle(line, v_i, v_j, P)
    limit = math.pi / 2 if line.r == 0 else math.atan(line.x / line.r)
    if abs(theta) >= limit:
        raise OutOfA3Range(f"angle {theta:.4g} violates |theta| < arctan(x/r) = {limit:.4g}")
    val = P - l * line.r
    if check:
        closed = phi_closed_form(line, v_i, v_j, P)
        if abs(closed - val) > 1e-9 * max(1.0, abs(val)):
            raise ArithmeticError(f"phi mismatch: {val!r} vs closed form {closed!r}")
    return val


def phi_closed_form(line: Line, v_i: float, v_j: float, P: float) -> float:
    z2 = line.z2
    beta = math.atan2(line.r, line.x)
    theta = _angle(line, v_i, v_j, P)
    return -v_j * line.r / z2 + math.sqrt(v_i * v_j / z2) * math.sin(theta + beta)


def thermal_loss_L(line: Line, v_k: float, v_k1: float) -> float:
    """Loss ``l r`` of line ``(k, k+1)`` at the point where ``P_{k+1,k} = 0``.

    With ``P_{k,k+1} = l r`` the line equations reduce to
    ``|z|^4 l^2 - 2 a l + dv^2 = 0`` with ``a = x^2 (v_k + v_{k+1}) + r^2 dv``;
    the small root is the physical one.
    """
    dv = v_k - v_k1
    a = line.x**2 * (v_k + v_k1) + line.r**2 * dv
    disc = a * a - line.z2**2 * dv * dv
    if disc < 0 or a <= 0:
        raise ComplexDiscriminant(f"voltages {v_k:g}, {v_k1:g} admit no zero-delivery operating point")
    return dv * dv * line.r / (a + math.sqrt(disc))


def approx_L(line: Line, v_k: float, v_k1: float) -> float:
    """Simplified closed form for ``L_k``; it underestimates :func:`thermal_loss_L`
    by a factor that grows with ``r/x`` and is kept for comparison only."""
    dv = v_k - v_k1
    sv = v_k + v_k1
    disc = sv * sv - dv * dv * (line.r**2 / line.x**2 + 1.0)
    if disc < 0:
        raise ComplexDiscriminant(f"voltages {v_k:g}, {v_k1:g} admit no zero-delivery operating point")
    return dv * dv * line.r / line.z2 / (sv + math.sqrt(disc))


def zero_delivery_loss(line: Line, v_i: float, v_j: float) -> float:
    """Independent route to ``L``: solve the line equations with ``P_ij = l r``.

    Substituting ``P = l r`` into the voltage drop gives ``Q`` linear in ``l``;
    the cone equality is then a quadratic in ``l`` whose small root is taken.
    """
    r, x = line.r, line.x
    dv = v_i - v_j
    # Q = (dv + l (x^2 - r^2)) / (2x);  l^2 r^2 + Q^2 - l v_i = 0
    k = (x * x - r * r) / (2 * x)
    q0 = dv / (2 * x)
    coeffs = [r * r + k * k, 2 * k * q0 - v_i, q0 * q0]
    roots = np.roots(coeffs)
    real = sorted(float(t.real) for t in roots if abs(t.imag) <= 1e-12 * max(1.0, abs(t.real)) and t.real >= -1e-15)
    if not real:
        raise ComplexDiscriminant("no real zero-delivery operating point")
    return max(real[0], 0.0) * r


# --- per-path constants ------------------------------------------------------


def _pinned_v(bus) -> float:
    lo, hi = bus.v_bounds
    if lo != hi:
        raise ValueError(f"bus {bus.id} voltage is not fixed")
    return lo


def downstream_cap(net: Network, path: Path, bus_id: int) -> float:
    """Sum of ``p_max`` over ``bus_id`` and the laterals hanging off it."""
    on_path = set(path.buses)
    total, seen, stack = 0.0, {bus_id}, [bus_id]
    adj = net.adjacency()
    while stack:
        u = stack.pop()
        total += net.bus(u).p_bounds[1]
        for ln in adj[u]:
            w = ln.other(u)
            if w not in seen and w not in on_path:
                seen.add(w)
                stack.append(w)
    return total


@dataclass
class LineLossConstants:
    lines: list  # path edges (a, b)
    L: np.ndarray
    R_k: np.ndarray
    s_base: float = 1.0

    @property
    def R(self) -> float:
        return float(np.min(self.R_k, initial=math.inf))

    def to_dict(self) -> dict:
        return {
            "lines": [list(e) for e in self.lines],
            "L_k_pu": [float(v) for v in self.L],
            "L_k_w": [float(v) * self.s_base * 1e6 for v in self.L],
            "R_k": [_num(v) for v in self.R_k],
            "R": _num(self.R),
        }


def _num(v):
    return None if math.isinf(v) else float(v)


def line_loss_constants(net: Network, path: Path, voltages: Optional[dict] = None) -> LineLossConstants:
    """``L_k`` per path line and ``R_k = -p_max(k+1) / L_k``.

    Voltages come from ``voltages`` (``{bus: |V|^2}``) or the buses' pinned
    bounds.  ``p_max(k+1)`` sums the bus and its laterals; the last line ends
    at a substation and gets ``R_k = inf``.
    """
    L, R = [], []
    for a, b in path.edges():
        ln = net.find_line(a, b)
        va = voltages[a] if voltages else _pinned_v(net.bus(a))
        vb = voltages[b] if voltages else _pinned_v(net.bus(b))
        Lk = thermal_loss_L(ln, va, vb)
        L.append(Lk)
        if net.bus(b).is_substation or Lk <= 0:
            R.append(math.inf)
        else:
            R.append(-downstream_cap(net, path, b) / Lk)
    return LineLossConstants(path.edges(), np.array(L), np.array(R), net.base[1])


# --- the value function f ----------------------------------------------------


@dataclass
class FCurve:
    p0: np.ndarray  # feasible grid points, p.u.
    f: np.ndarray
    infeasible: list = field(default_factory=list)
    s_base: float = 1.0
    step: float = 0.0
    inexact: list = field(default_factory=list)  # (p0, f, max SOC gap) left out of the curve

    @property
    def interval(self) -> tuple:
        if not len(self.p0):
            return (math.nan, math.nan)
        return (float(self.p0[0]), float(self.p0[-1]))

    @property
    def second_differences(self) -> np.ndarray:
        """Central second differences at interior points with both neighbours feasible."""
        p, f = self.p0, self.f
        out = []
        for k in range(1, len(p) - 1):
            h1, h2 = p[k] - p[k - 1], p[k + 1] - p[k]
            if abs(h1 - h2) > 1e-9 * max(1.0, abs(h1)) or h1 > self.step * (1 + 1e-9):
                continue
            out.append((f[k - 1] - 2 * f[k] + f[k + 1]) / (h1 * h1))
        return np.array(out)

    @property
    def kappa_f(self) -> float:
        """Curvature estimate in 1/p.u.: the smallest central second difference."""
        d2 = self.second_differences
        return float(d2.min()) if d2.size else math.nan

    @property
    def kappa_f_mw(self) -> float:
        return self.kappa_f / self.s_base

    def decreasing(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.diff(self.f) < tol))

    def midpoint_convex(self, tol: float = 1e-8) -> bool:
        f = self.f
        return bool(np.all(f[1:-1] <= 0.5 * (f[:-2] + f[2:]) + tol))

    def rows(self) -> list:
        """``(p0_mw, f_mw, aggregate_mw)`` per feasible point."""
        sb = self.s_base
        return [(p * sb, v * sb, (p + v) * sb) for p, v in zip(self.p0, self.f)]


def grid(lo: float, hi: float, step: float) -> np.ndarray:
    if step <= 0 or hi < lo:
        raise ValueError("grid needs lo <= hi and step > 0")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(n)


def sample_f_curve(
    net: Network, roots: tuple, p0_grid, settings: Optional[OpfSettings] = None
) -> FCurve:
    """Solve the fixed-``p0`` problem at each grid point (p.u.).

    Infeasible points and points whose relaxation is not exact are listed
    apart: an inexact optimum is not a power flow, so its value is not ``f``.
    """
    p0_grid = np.sort(np.asarray(p0_grid, dtype=float))
    ps, fs, bad, loose = [], [], [], []
    for p0 in p0_grid:
        try:
            res = solve_opf_fixed_p0(net, float(p0), roots, settings)
        except Infeasible:
            bad.append(float(p0))
            continue
        if not res.exact:
            loose.append((float(p0), res.objective, res.max_soc_gap))
            continue
        ps.append(float(p0))
        fs.append(res.objective)
    step = float(np.min(np.diff(p0_grid))) if len(p0_grid) > 1 else 0.0
    return FCurve(np.array(ps), np.array(fs), bad, net.base[1], step, loose)


TIE_BREAK = 0.1  # weight on the other substation when minimizing one injection; needs |f'| < 1/TIE_BREAK


def feasible_interval(net: Network, roots: tuple, settings: Optional[OpfSettings] = None) -> tuple:
    """``(lo, hi)`` range of ``p0`` over which ``f`` is decreasing.

    ``lo`` is the least ``p0``; ``hi`` the least ``p0`` at which ``p0'`` reaches
    its own minimum.  Minimizing ``p0'`` alone would not do: past ``hi`` the
    relaxation can burn surplus power, so that minimum is flat in ``p0``.
    """
    s0, s1 = roots
    # A small weight on the other substation keeps the optimum a power flow
    # (with one side free the relaxation may burn power there) without moving
    # it, since |f'| is near 1 and so p0 + TIE_BREAK * f(p0) still increases.
    lo = solve_weighted(net, {s0: 1.0, s1: TIE_BREAK}, settings).injection(s0)
    least_p1 = solve_weighted(net, {s1: 1.0, s0: TIE_BREAK}, settings).injection(s1)
    hi = solve_opf_fixed_p0(net, least_p1, (s1, s0), settings).objective
    return lo, hi


def _flow_at(net, path, roots, settings, a, b):
    def g(p0):
        return solve_opf_fixed_p0(net, p0, roots, settings).x.flow(a, b, net)

    return g


def _root(g, lo, hi, what):
    glo, ghi = g(lo), g(hi)
    if abs(glo) <= CROSS_TOL:
        return lo
    if abs(ghi) <= CROSS_TOL:
        return hi
    if glo * ghi > 0:
        raise NoCrossing(f"{what} keeps its sign on [{lo:.6g}, {hi:.6g}]")
    p = brentq(g, lo, hi, xtol=1e-13, rtol=4 * np.finfo(float).eps, maxiter=CROSS_MAXITER)
    if abs(g(p)) > CROSS_TOL:
        raise NoCrossing(f"{what}: root search ended with |P| = {abs(g(p)):.2e}")
    return p


@dataclass
class Crossing:
    line: tuple  # path edge (k, k+1)
    p0_f: float  # P_{k,k+1} = 0
    p0_b: float  # P_{k+1,k} = 0


def crossing_points(
    net: Network,
    path: Path,
    settings: Optional[OpfSettings] = None,
    lines: Optional[list] = None,
    backward: bool = True,
) -> list:
    """``p0^f(k)`` and ``p0^b(k)`` for each path edge (or the given subset).

    With ``backward=False`` only ``p0^f`` is computed and ``p0_b`` is NaN.
    """
    settings = settings or OpfSettings()
    roots = (path.start, path.end)
    lo, hi = feasible_interval(net, roots, settings)
    out = []
    for a, b in lines or path.edges():
        pf = _root(_flow_at(net, path, roots, settings, a, b), lo, hi, f"P{(a, b)}")
        pb = _root(_flow_at(net, path, roots, settings, b, a), lo, hi, f"P{(b, a)}") if backward else math.nan
        out.append(Crossing((a, b), pf, pb))
    return out


def subtree_min_injection(net: Network, path: Path, edge: tuple, settings: Optional[OpfSettings] = None) -> float:
    """Least injection of substation 0 serving its side after opening ``edge``."""
    ln = net.find_line(*edge)
    s0, _ = split_at_line(net, path, ln)
    return min_injection(s0, path.start, settings)


# --- the bound ---------------------------------------------------------------


@dataclass
class Bound:
    value_pu: float
    kappa_f: float
    R: float
    factor: float
    s_base: float = 1.0

    @property
    def watts(self) -> float:
        return self.value_pu * self.s_base * 1e6


def suboptimality_bound(curve: FCurve, consts: LineLossConstants, obj: Objective, tol: float = 1e-12) -> Bound:
    """``max(c0^2/c0', c0'^2/c0) * 2 / (R^2 kappa_f)`` for a linear objective."""
    if obj.kind == "aggregate":
        c0 = c1 = 1.0
    elif obj.kind == "linear":
        c0, c1 = obj.c0, obj.c0p
    else:
        raise ValueError("the bound holds for linear objectives only")
    if c0 <= 0 or c1 <= 0:
        raise ValueError("the bound needs positive coefficients")
    factor = max(c0 * c0 / c1, c1 * c1 / c0)
    kappa, R = curve.kappa_f, consts.R
    if math.isinf(R):
        return Bound(0.0, kappa, R, factor, curve.s_base)
    if not kappa > tol:
        raise DegenerateBound(f"kappa_f = {kappa:.3g} is not positive")
    return Bound(factor * 2.0 / (R * R * kappa), kappa, R, factor, curve.s_base)
