"""Random test feeders: two substations joined by a path of load buses,
optionally with radial laterals hanging off the path buses."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .netmodel import INF, LOAD, SUBSTATION, Bus, Line, Network, find_path


def _load(bid, demand, v, q_ratio):
    q = (-INF, INF) if q_ratio is None else (-q_ratio * demand, q_ratio * demand)
    return Bus(bid, LOAD, (-demand, -demand), q, (v, v) if v else (0.95**2, 1.05**2))


def two_feeder(
    rng: np.random.Generator,
    n_path: int,
    n_lateral: int = 0,
    equal_voltage: bool = True,
    v_spread: float = 0.02,
    demand: tuple = (0.02, 0.2),
    r_range: tuple = (0.002, 0.01),
    xr_range: tuple = (1.0, 3.0),
    v_pinned: bool = True,
    q_ratio: Optional[float] = None,
) -> tuple:
    """Joined two-feeder network and its substation-to-substation path.

    Bus 0 and bus ``n_path + 1`` are substations with ``p >= 0`` and
    ``|V| = 1``; path buses are ``1..n_path``; laterals get the next ids and
    attach to a random earlier bus.  Voltages are pinned (equal at 1 p.u. or
    drawn from ``1 +- v_spread``), so the instance is meant for A2 mode;
    with ``v_pinned=False`` loads get ``|V|`` in [0.95, 1.05] and reactive
    limits ``+-q_ratio * demand`` (free if ``q_ratio`` is None).
    Reactances are ``r`` times a ratio drawn from ``xr_range``.
    """
    if n_path < 1:
        raise ValueError("need at least one load bus on the path")
    end = n_path + 1

    def volt():
        if not v_pinned:
            return None
        if equal_voltage:
            return 1.0
        return float(rng.uniform(1 - v_spread, 1 + v_spread)) ** 2

    buses = [Bus(0, SUBSTATION, (0.0, INF), (-INF, INF), (1.0, 1.0))]
    buses += [_load(i, float(rng.uniform(*demand)), volt(), q_ratio) for i in range(1, end)]
    buses.append(Bus(end, SUBSTATION, (0.0, INF), (-INF, INF), (1.0, 1.0)))

    def line(a, b):
        r = float(rng.uniform(*r_range))
        return Line(a, b, r, r * float(rng.uniform(*xr_range)))

    lines = [line(i, i + 1) for i in range(end)]
    attach = list(range(1, end))
    for n in range(n_lateral):
        bid = end + 1 + n
        parent = int(rng.choice(attach))
        buses.append(_load(bid, float(rng.uniform(*demand)), volt(), q_ratio))
        lines.append(line(parent, bid))
        attach.append(bid)
    net = Network(tuple(buses), tuple(lines), name="synthetic")
    return net, find_path(net, 0, end)


def three_bus(r: float = 0.01, x: float = 0.02, demand: float = 0.2) -> tuple:
    """Symmetric 0 - 1 - 0' network with one load at the middle."""
    buses = (
        Bus(0, SUBSTATION, (0.0, INF), (-INF, INF), (1.0, 1.0)),
        _load(1, demand, 1.0, None),
        Bus(2, SUBSTATION, (0.0, INF), (-INF, INF), (1.0, 1.0)),
    )
    net = Network(buses, (Line(0, 1, r, x), Line(1, 2, r, x)), name="three-bus")
    return net, find_path(net, 0, 2)


def random_tree(rng: np.random.Generator, n: int, v_pinned: Optional[float] = 1.0) -> Network:
    """Single-substation random tree on ``n`` buses (bus 0 is the substation)."""
    buses = [Bus(0, SUBSTATION, (0.0, INF), (-INF, INF), (1.0, 1.0))]
    lines = []
    for i in range(1, n):
        buses.append(_load(i, float(rng.uniform(0.01, 0.2)), v_pinned, None))
        parent = int(rng.integers(0, i))
        r = float(rng.uniform(0.002, 0.01))
        lines.append(Line(parent, i, r, r * float(rng.uniform(1.0, 3.0))))
    return Network(tuple(buses), tuple(lines), name="tree")


