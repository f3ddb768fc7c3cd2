"""Relaxed branch-flow variables, equation residuals, exactness of the
second-order cone relaxation and recovery of voltage phase angles."""

from __future__ import annotations

import cmath
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .netmodel import Network, validate_radial

SOC_GAP_FLOOR = 1e-12


class DimensionMismatch(ValueError):
    pass


class NotRadial(ValueError):
    pass


class NotExact(ValueError):
    pass


@dataclass(frozen=True)
class OperatingPoint:
    """Relaxed operating point ``(p, q, P, Q, l, v)`` plus optional angles.

    Bus arrays follow ``bus_ids``; line arrays follow ``line_keys`` and hold
    sending-end quantities in the stored orientation of each line.
    """

    bus_ids: tuple
    line_keys: tuple
    p: np.ndarray
    q: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    l: np.ndarray
    v: np.ndarray
    theta: Optional[np.ndarray] = None

    def __post_init__(self):
        nb, nl = len(self.bus_ids), len(self.line_keys)
        for name, size in (("p", nb), ("q", nb), ("v", nb), ("P", nl), ("Q", nl), ("l", nl)):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (size,):
                raise DimensionMismatch(f"{name} has shape {arr.shape}, expected ({size},)")
            object.__setattr__(self, name, arr)
        if self.theta is not None:
            theta = np.asarray(self.theta, dtype=float)
            if theta.shape != (nb,):
                raise DimensionMismatch("theta does not match the bus set")
            object.__setattr__(self, "theta", theta)

    def bus_pos(self, bus_id) -> int:
        return self.bus_ids.index(bus_id)

    def line_pos(self, key) -> int:
        return self.line_keys.index(tuple(key))

    def injection(self, bus_id) -> float:
        return float(self.p[self.bus_pos(bus_id)])

    def flow(self, a: int, b: int, net: Network) -> float:
        """Real power sent from ``a`` towards ``b`` (``P_ab``), either orientation."""
        if (a, b) in self.line_keys:
            return float(self.P[self.line_pos((a, b))])
        k = self.line_pos((b, a))
        ln = net.find_line(a, b)
        return float(-self.P[k] + self.l[k] * ln.r)

    def to_dict(self) -> dict:
        d = {
            "buses": {
                str(b): {"p": float(self.p[i]), "q": float(self.q[i]), "v": float(self.v[i])}
                for i, b in enumerate(self.bus_ids)
            },
            "lines": [
                {"from": a, "to": b, "P": float(self.P[k]), "Q": float(self.Q[k]), "l": float(self.l[k])}
                for k, (a, b) in enumerate(self.line_keys)
            ],
        }
        if self.theta is not None:
            for i, b in enumerate(self.bus_ids):
                d["buses"][str(b)]["theta"] = float(self.theta[i])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "OperatingPoint":
        bus_ids = tuple(int(b) for b in d["buses"])
        buses = [d["buses"][str(b)] for b in bus_ids]
        lines = d["lines"]
        theta = None
        if buses and all("theta" in b for b in buses):
            theta = [b["theta"] for b in buses]
        return cls(
            bus_ids=bus_ids,
            line_keys=tuple((ln["from"], ln["to"]) for ln in lines),
            p=[b["p"] for b in buses],
            q=[b["q"] for b in buses],
            v=[b["v"] for b in buses],
            P=[ln["P"] for ln in lines],
            Q=[ln["Q"] for ln in lines],
            l=[ln["l"] for ln in lines],
            theta=theta,
        )


@dataclass
class ResidualReport:
    real_balance: float
    reactive_balance: float
    voltage_drop: float
    soc_gap: np.ndarray
    injection_violation: float
    voltage_violation: float
    current_violation: float
    line_keys: tuple = field(default=())

    @property
    def max_soc_gap(self) -> float:
        return float(np.max(np.abs(self.soc_gap), initial=0.0))

    @property
    def max_equation_residual(self) -> float:
        return max(self.real_balance, self.reactive_balance, self.voltage_drop)


def _lines_of(net: Network, x: OperatingPoint):
    lines = {ln.key: ln for ln in net.lines}
    try:
        return [lines[k] for k in x.line_keys]
    except KeyError as exc:
        raise DimensionMismatch(f"line {exc.args[0]} not in network") from exc


def soc_gaps(net: Network, x: OperatingPoint, floor: float = SOC_GAP_FLOOR) -> np.ndarray:
    """Relative slack ``(l v_i - P^2 - Q^2) / max(l v_i, floor)`` per line."""
    vi = np.array([x.v[x.bus_pos(a)] for a, _ in x.line_keys])
    lv = x.l * vi
    return (lv - x.P**2 - x.Q**2) / np.maximum(lv, floor)


def residuals(net: Network, x: OperatingPoint) -> ResidualReport:
    """Evaluate the branch-flow equations and operating limits at ``x``."""
    if tuple(net.bus_ids) != tuple(x.bus_ids):
        if sorted(net.bus_ids) != sorted(x.bus_ids):
            raise DimensionMismatch("operating point and network have different buses")
    lines = _lines_of(net, x)
    nb = len(x.bus_ids)
    pos = {b: i for i, b in enumerate(x.bus_ids)}
    bal_p = -x.p.copy()
    bal_q = -x.q.copy()
    drop = np.zeros(len(lines))
    for k, ln in enumerate(lines):
        i, j = pos[ln.from_bus], pos[ln.to_bus]
        bal_p[i] += x.P[k]
        bal_q[i] += x.Q[k]
        bal_p[j] -= x.P[k] - x.l[k] * ln.r
        bal_q[j] -= x.Q[k] - x.l[k] * ln.x
        drop[k] = x.v[j] - x.v[i] + 2 * (ln.r * x.P[k] + ln.x * x.Q[k]) - x.l[k] * ln.z2

    inj = vol = 0.0
    for b in net.buses:
        i = pos[b.id]
        pl, pu = b.p_bounds
        ql, qu = b.q_bounds
        qu = qu + b.shunt_cap
        vl, vu = b.v_bounds
        inj = max(inj, pl - x.p[i], x.p[i] - pu, ql - x.q[i], x.q[i] - qu)
        vol = max(vol, vl - x.v[i], x.v[i] - vu)
    cur = max([x.l[k] - ln.l_max for k, ln in enumerate(lines)] + [0.0])
    return ResidualReport(
        real_balance=float(np.max(np.abs(bal_p), initial=0.0)) if nb else 0.0,
        reactive_balance=float(np.max(np.abs(bal_q), initial=0.0)) if nb else 0.0,
        voltage_drop=float(np.max(np.abs(drop), initial=0.0)),
        soc_gap=soc_gaps(net, x),
        injection_violation=max(inj, 0.0),
        voltage_violation=max(vol, 0.0),
        current_violation=cur,
        line_keys=x.line_keys,
    )


def exactness(net: Network, x: OperatingPoint, tol: float = 1e-6, floor: float = SOC_GAP_FLOOR) -> list:
    """Lines whose relative cone slack exceeds ``tol``; empty means exact."""
    gaps = soc_gaps(net, x, floor)
    return [x.line_keys[k] for k in np.flatnonzero(gaps > tol)]


def is_exact(net: Network, x: OperatingPoint, tol: float = 1e-6, floor: float = SOC_GAP_FLOOR) -> bool:
    return not exactness(net, x, tol, floor)


def recover_angles(net: Network, x: OperatingPoint, tol: float = 1e-6, check: bool = True) -> OperatingPoint:
    """Attach phase angles: zero at each tree root, and across every line
    ``theta_i - theta_j = angle(v_i - conj(z) S_ij)``."""
    if check:
        report = validate_radial(net)
        if report.cycles:
            raise NotRadial(report.describe())
        slack = exactness(net, x, tol)
        if slack:
            raise NotExact(f"relaxation not exact on lines {slack}")
    lines = _lines_of(net, x)
    pos = {b: i for i, b in enumerate(x.bus_ids)}
    adj = {b: [] for b in x.bus_ids}
    for k, ln in enumerate(lines):
        adj[ln.from_bus].append(k)
        adj[ln.to_bus].append(k)
    theta = np.full(len(x.bus_ids), np.nan)
    roots = [b.id for b in net.buses if b.is_substation] + list(x.bus_ids)
    for root in roots:
        if not np.isnan(theta[pos[root]]):
            continue
        theta[pos[root]] = 0.0
        queue = deque([root])
        while queue:
            u = queue.popleft()
            for k in adj[u]:
                ln = lines[k]
                w = ln.other(u)
                if not np.isnan(theta[pos[w]]):
                    continue
                i = pos[ln.from_bus]
                S = complex(x.P[k], x.Q[k])
                z = complex(ln.r, ln.x)
                diff = cmath.phase(x.v[i] - z.conjugate() * S)  # theta_from - theta_to
                if w == ln.to_bus:
                    theta[pos[w]] = theta[pos[u]] - diff
                else:
                    theta[pos[w]] = theta[pos[u]] + diff
                queue.append(w)
    return replace(x, theta=theta)


def ohm_residuals(net: Network, x: OperatingPoint) -> np.ndarray:
    """Per line ``|V_i - V_j - z I_ij|`` with ``I_ij = conj(S_ij / V_i)``; needs angles."""
    if x.theta is None:
        raise ValueError("operating point has no angles; call recover_angles first")
    lines = _lines_of(net, x)
    pos = {b: i for i, b in enumerate(x.bus_ids)}
    V = np.sqrt(x.v) * np.exp(1j * x.theta)
    out = np.zeros(len(lines))
    for k, ln in enumerate(lines):
        i, j = pos[ln.from_bus], pos[ln.to_bus]
        current = np.conj(complex(x.P[k], x.Q[k]) / V[i])
        out[k] = abs(V[i] - V[j] - complex(ln.r, ln.x) * current)
    return out


def check_assumption_A3(net: Network, x: OperatingPoint) -> list:
    """Lines with ``|theta_i - theta_j| >= arctan(x/r)``; empty means the angle
    condition holds everywhere."""
    if x.theta is None:
        raise ValueError("operating point has no angles; call recover_angles first")
    pos = {b: i for i, b in enumerate(x.bus_ids)}
    bad = []
    for ln in _lines_of(net, x):
        limit = math.pi / 2 if ln.r == 0 else math.atan(ln.x / ln.r)
        if abs(x.theta[pos[ln.from_bus]] - x.theta[pos[ln.to_bus]]) >= limit:
            bad.append(ln.key)
    return bad


def total_loss(net: Network, x: OperatingPoint) -> float:
    return float(sum(x.l[k] * ln.r for k, ln in enumerate(_lines_of(net, x))))
