"""Distribution network data model: buses, switchable lines, radiality checks,
tree paths, subtree splitting and the virtual-substation transformation.

All electrical quantities are stored in per-unit.  Voltage bounds are stored
as bounds on the *squared* magnitude ``v = |V|^2``.
"""

from __future__ import annotations

import math
from collections import defaultdict, deque
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

INF = math.inf

SUBSTATION = "substation"
LOAD = "load"
OPEN = "open"
CLOSED = "closed"


class NetworkError(ValueError):
    pass


class NotConnected(NetworkError):
    pass


class LineNotOnPath(NetworkError):
    pass


class NotALoopThroughSubstation(NetworkError):
    pass


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str = LOAD
    p_bounds: tuple = (0.0, 0.0)
    q_bounds: tuple = (0.0, 0.0)
    v_bounds: tuple = (1.0, 1.0)
    shunt_cap: float = 0.0
    # for virtual substations: id of the physical bus this one duplicates
    virtual_of: Optional[int] = None

    def __post_init__(self):
        if self.kind not in (SUBSTATION, LOAD):
            raise NetworkError(f"bus {self.id}: unknown kind {self.kind!r}")
        (pl, pu), (ql, qu), (vl, vu) = self.p_bounds, self.q_bounds, self.v_bounds
        if pl > pu or ql > qu:
            raise NetworkError(f"bus {self.id}: empty injection bounds")
        if not 0 < vl <= vu:
            raise NetworkError(f"bus {self.id}: need 0 < v_min <= v_max")
        if self.shunt_cap < 0:
            raise NetworkError(f"bus {self.id}: negative shunt capacity")

    @property
    def is_substation(self) -> bool:
        return self.kind == SUBSTATION

    @property
    def demand(self) -> float:
        """Fixed real demand of a load bus (``-p_max``); zero for substations."""
        return 0.0 if self.is_substation else -self.p_bounds[1]

    @property
    def label(self) -> str:
        return f"{self.virtual_of}'" if self.virtual_of is not None else str(self.id)


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    r: float
    x: float
    switch: str = CLOSED
    l_max: float = INF

    def __post_init__(self):
        if self.from_bus == self.to_bus:
            raise NetworkError(f"line ({self.from_bus},{self.to_bus}) is a self loop")
        if not self.x > 0:
            raise NetworkError(f"line ({self.from_bus},{self.to_bus}): reactance must be positive")
        if self.r < 0:
            raise NetworkError(f"line ({self.from_bus},{self.to_bus}): negative resistance")
        if self.switch not in (OPEN, CLOSED):
            raise NetworkError(f"line ({self.from_bus},{self.to_bus}): bad switch state {self.switch!r}")
        if not self.l_max > 0:
            raise NetworkError(f"line ({self.from_bus},{self.to_bus}): l_max must be positive")

    @property
    def key(self) -> tuple:
        return (self.from_bus, self.to_bus)

    @property
    def closed(self) -> bool:
        return self.switch == CLOSED

    @property
    def z2(self) -> float:
        return self.r * self.r + self.x * self.x

    def other(self, bus: int) -> int:
        return self.to_bus if bus == self.from_bus else self.from_bus

    def touches(self, a: int, b: int) -> bool:
        return {a, b} == {self.from_bus, self.to_bus}


@dataclass(frozen=True)
class PathStep:
    """One line of a path, traversed from ``a`` to ``b``."""

    line: Line
    a: int
    b: int

    @property
    def forward(self) -> bool:
        return self.line.from_bus == self.a


@dataclass(frozen=True)
class Path:
    start: int
    steps: tuple = ()

    @property
    def end(self) -> int:
        return self.steps[-1].b if self.steps else self.start

    @property
    def lines(self) -> list:
        return [s.line for s in self.steps]

    @property
    def buses(self) -> list:
        return [self.start] + [s.b for s in self.steps]

    def edges(self) -> list:
        """Path edges as oriented (a, b) pairs."""
        return [(s.a, s.b) for s in self.steps]

    def reversed(self) -> "Path":
        return Path(self.end, tuple(PathStep(s.line, s.b, s.a) for s in reversed(self.steps)))

    def index_of(self, line: Line) -> int:
        for i, s in enumerate(self.steps):
            if s.line.key == line.key:
                return i
        raise LineNotOnPath(f"line {line.key} is not on the path")

    def __len__(self):
        return len(self.steps)


@dataclass(frozen=True)
class Network:
    buses: tuple
    lines: tuple
    base: tuple = (12.0, 1.0)  # (v_base kV, s_base MVA)
    name: str = ""
    _bus_index: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        buses = tuple(self.buses)
        lines = tuple(self.lines)
        object.__setattr__(self, "buses", buses)
        object.__setattr__(self, "lines", lines)
        index = {}
        for i, b in enumerate(buses):
            if b.id in index:
                raise NetworkError(f"duplicate bus id {b.id}")
            index[b.id] = i
        object.__setattr__(self, "_bus_index", index)
        for ln in lines:
            for end in (ln.from_bus, ln.to_bus):
                if end not in index:
                    raise NetworkError(f"line {ln.key} references unknown bus {end}")

    # --- lookup --------------------------------------------------------

    def bus(self, bus_id: int) -> Bus:
        return self.buses[self._bus_index[bus_id]]

    def index(self, bus_id: int) -> int:
        return self._bus_index[bus_id]

    def has_bus(self, bus_id: int) -> bool:
        return bus_id in self._bus_index

    @property
    def bus_ids(self) -> list:
        return [b.id for b in self.buses]

    @property
    def substations(self) -> list:
        return [b.id for b in self.buses if b.is_substation]

    @property
    def closed_lines(self) -> list:
        return [ln for ln in self.lines if ln.closed]

    @property
    def open_lines(self) -> list:
        return [ln for ln in self.lines if not ln.closed]

    @property
    def z_base(self) -> float:
        return self.base[0] ** 2 / self.base[1]

    def find_line(self, a: int, b: int) -> Line:
        for ln in self.lines:
            if ln.touches(a, b):
                return ln
        raise NetworkError(f"no line between {a} and {b}")

    def adjacency(self, closed_only: bool = True) -> dict:
        adj = defaultdict(list)
        for ln in self.lines:
            if closed_only and not ln.closed:
                continue
            adj[ln.from_bus].append(ln)
            adj[ln.to_bus].append(ln)
        return adj

    # --- edits (all return new networks) ---------------------------------

    def with_switch(self, line: Line, state: str) -> "Network":
        lines = tuple(replace(ln, switch=state) if ln.key == line.key else ln for ln in self.lines)
        return replace(self, lines=lines, _bus_index=None)

    def with_open(self, open_keys: Iterable) -> "Network":
        """Network whose open lines are exactly ``open_keys``."""
        keys = {tuple(k) for k in open_keys}
        lines = tuple(replace(ln, switch=OPEN if ln.key in keys else CLOSED) for ln in self.lines)
        return replace(self, lines=lines, _bus_index=None)

    def subnetwork(self, bus_ids: Iterable, lines: Optional[Iterable] = None) -> "Network":
        keep = set(bus_ids)
        if lines is None:
            lines = [ln for ln in self.closed_lines if ln.from_bus in keep and ln.to_bus in keep]
        return Network(
            buses=tuple(b for b in self.buses if b.id in keep),
            lines=tuple(lines),
            base=self.base,
            name=self.name,
        )

    def map_buses(self, fn) -> "Network":
        return replace(self, buses=tuple(fn(b) for b in self.buses), _bus_index=None)

    def total_demand(self) -> float:
        return sum(b.demand for b in self.buses)


# --- graph operations -------------------------------------------------------


@dataclass
class RadialityReport:
    ok: bool
    cycles: list = field(default_factory=list)
    multi_substation: list = field(default_factory=list)
    unserved: list = field(default_factory=list)

    def __bool__(self):
        return self.ok

    def describe(self) -> str:
        if self.ok:
            return "ok"
        parts = []
        for cyc in self.cycles:
            parts.append(f"cycle through line {cyc}")
        for comp, subs in self.multi_substation:
            parts.append(f"component containing bus {min(comp)} has substations {sorted(subs)}")
        for comp in self.unserved:
            parts.append(f"component containing bus {min(comp)} has no substation")
        return "; ".join(parts)


def components(net: Network, closed_only: bool = True) -> list:
    adj = net.adjacency(closed_only)
    seen = set()
    comps = []
    for b in net.bus_ids:
        if b in seen:
            continue
        comp = {b}
        queue = deque([b])
        seen.add(b)
        while queue:
            u = queue.popleft()
            for ln in adj[u]:
                w = ln.other(u)
                if w not in seen:
                    seen.add(w)
                    comp.add(w)
                    queue.append(w)
        comps.append(comp)
    return comps


def validate_radial(net: Network) -> RadialityReport:
    """Check that closed lines form a forest with one substation per tree."""
    report = RadialityReport(ok=True)
    parent = {b: b for b in net.bus_ids}

    def find(u):
        while parent[u] != u:
            parent[u] = parent[parent[u]]
            u = parent[u]
        return u

    for ln in net.closed_lines:
        ra, rb = find(ln.from_bus), find(ln.to_bus)
        if ra == rb:
            report.cycles.append(ln.key)
        else:
            parent[ra] = rb
    for comp in components(net):
        subs = [b for b in comp if net.bus(b).is_substation]
        if len(subs) > 1:
            report.multi_substation.append((comp, subs))
        elif not subs:
            report.unserved.append(comp)
    report.ok = not (report.cycles or report.multi_substation or report.unserved)
    return report


def find_path(net: Network, a: int, b: int, exclude: Optional[Line] = None) -> Path:
    """Unique path from ``a`` to ``b`` over closed lines (optionally skipping one)."""
    if a == b:
        return Path(a)
    adj = net.adjacency()
    prev = {a: None}
    queue = deque([a])
    while queue:
        u = queue.popleft()
        if u == b:
            break
        for ln in sorted(adj[u], key=lambda l: l.key):
            if exclude is not None and ln.key == exclude.key:
                continue
            w = ln.other(u)
            if w not in prev:
                prev[w] = (u, ln)
                queue.append(w)
    if b not in prev:
        raise NotConnected(f"buses {a} and {b} are not connected")
    steps = []
    u = b
    while prev[u] is not None:
        w, ln = prev[u]
        steps.append(PathStep(ln, w, u))
        u = w
    return Path(a, tuple(reversed(steps)))


def _reach(net: Network, start: int, removed_key: tuple) -> set:
    adj = net.adjacency()
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for ln in adj[u]:
            if ln.key == removed_key:
                continue
            w = ln.other(u)
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return seen


def split_at_line(net: Network, path: Path, line: Line) -> tuple:
    """Remove ``line`` from the tree joined by ``path``.

    Returns ``(sub0, sub1)`` where ``sub0`` contains the path start and
    ``sub1`` the path end.
    """
    path.index_of(line)
    side0 = _reach(net, path.start, line.key)
    side1 = _reach(net, path.end, line.key)
    if side0 & side1:
        raise NetworkError(f"removing {line.key} does not disconnect the path ends")
    return net.subnetwork(side0), net.subnetwork(side1)


def virtual_split(net: Network, substation: int, tie: Line) -> Network:
    """Duplicate ``substation`` so that closing ``tie`` joins two distinct roots.

    The new virtual substation gets id ``max(id) + 1`` and identical bounds.
    If the tie touches the substation, the tie's endpoint there is re-homed to
    the virtual bus; otherwise the first line from the substation towards the
    tie's ``to`` end is.  The tie is returned closed.
    """
    bus = net.bus(substation)
    if not bus.is_substation:
        raise NotALoopThroughSubstation(f"bus {substation} is not a substation")
    opened = net.with_switch(tie, OPEN)
    try:
        paths = [find_path(opened, substation, end) for end in (tie.from_bus, tie.to_bus)]
    except NotConnected as exc:
        raise NotALoopThroughSubstation(f"{tie.key} does not close a loop through {substation}") from exc

    new_id = max(net.bus_ids) + 1
    vbus = replace(bus, id=new_id, virtual_of=substation)

    def rehome(ln):
        if ln.from_bus == substation:
            return replace(ln, from_bus=new_id)
        return replace(ln, to_bus=new_id)

    if substation in (tie.from_bus, tie.to_bus):
        moved = tie.key
    else:
        first = [p.steps[0].line.key for p in paths]
        if first[0] == first[1]:
            raise NotALoopThroughSubstation(f"the loop closed by {tie.key} does not pass through {substation}")
        moved = first[1]
    lines = []
    for ln in net.lines:
        if ln.key == tie.key:
            ln = replace(ln, switch=CLOSED)
        if ln.key == moved:
            ln = rehome(ln)
        lines.append(ln)
    return Network(buses=net.buses + (vbus,), lines=tuple(lines), base=net.base, name=net.name)


def merge_virtual(net: Network) -> Network:
    """Undo :func:`virtual_split`: fold virtual substations back into their originals."""
    back = {b.id: b.virtual_of for b in net.buses if b.virtual_of is not None}
    if not back:
        return net
    lines = []
    for ln in net.lines:
        ln = replace(ln, from_bus=back.get(ln.from_bus, ln.from_bus), to_bus=back.get(ln.to_bus, ln.to_bus))
        lines.append(ln)
    return Network(
        buses=tuple(b for b in net.buses if b.id not in back), lines=tuple(lines), base=net.base, name=net.name
    )
