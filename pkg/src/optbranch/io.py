"""Network files: JSON parsing, per-unit conversion and serialization.

File layout (engineering units)::

    {"schema_version": 1,
     "base": {"v_base_kv": 12.0, "s_base_mva": 1.0},
     "buses": [{"id", "kind", "p_demand_mw", "q_min_mvar", "q_max_mvar",
                "v_min_pu", "v_max_pu", "shunt_cap_mvar",
                "p_min_mw", "p_max_mw"}, ...],
     "lines": [{"from", "to", "r_ohm", "x_ohm", "switch", "l_max_pu"}, ...]}

Voltage limits are magnitudes ``|V|`` in p.u. and are squared on load.  A
missing or ``null`` limit means unbounded.  When a load bus omits its
reactive limits they default to ``+-q_ratio * demand``.  Substations default
to ``p in [0, inf)``, free ``q`` and ``|V| = 1``.
"""

from __future__ import annotations

import hashlib
import json
import math
from importlib import resources
from pathlib import Path
from typing import Union

from .netmodel import CLOSED, INF, LOAD, SUBSTATION, Bus, Line, Network, NetworkError

SCHEMA_VERSION = 1
DEFAULT_Q_RATIO = 0.1
BUNDLED = ("sce56",)


class ParseError(ValueError):
    pass


class SchemaVersionMismatch(ParseError):
    pass


def _num(rec, key, where, default=None):
    val = rec.get(key, default)
    if val is None:
        return default
    try:
        return float(val)
    except (TypeError, ValueError):
        raise ParseError(f"{where}: field {key!r} is not a number: {val!r}") from None


def _lim(rec, key, where, default):
    val = _num(rec, key, where, None)
    return default if val is None else val


def parse_network(doc: dict, q_ratio: float = DEFAULT_Q_RATIO, name: str = "") -> Network:
    """Build a per-unit :class:`Network` from a decoded network document."""
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise SchemaVersionMismatch(f"schema_version {version} is not supported (expected {SCHEMA_VERSION})")
    try:
        base = doc["base"]
        v_base = float(base["v_base_kv"])
        s_base = float(base["s_base_mva"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"base: missing or bad field {exc}") from None
    z_base = v_base**2 / s_base

    buses = []
    seen = set()
    for n, rec in enumerate(doc.get("buses", [])):
        where = f"buses[{n}]"
        if "id" not in rec:
            raise ParseError(f"{where}: missing 'id'")
        bid = int(rec["id"])
        where = f"buses[{n}] (id {bid})"
        if bid in seen:
            raise ParseError(f"{where}: duplicate bus id")
        seen.add(bid)
        kind = rec.get("kind", LOAD)
        if kind not in (LOAD, SUBSTATION):
            raise ParseError(f"{where}: unknown kind {kind!r}")
        cap = _num(rec, "shunt_cap_mvar", where, 0.0) / s_base
        if kind == SUBSTATION:
            p_bounds = (_lim(rec, "p_min_mw", where, 0.0) / s_base, _lim(rec, "p_max_mw", where, INF) / s_base)
            q_bounds = (_lim(rec, "q_min_mvar", where, -INF) / s_base, _lim(rec, "q_max_mvar", where, INF) / s_base)
            v_lo, v_hi = _lim(rec, "v_min_pu", where, 1.0), _lim(rec, "v_max_pu", where, 1.0)
        else:
            d = _num(rec, "p_demand_mw", where, 0.0) / s_base
            p_bounds = (-d, -d)
            q_bounds = (
                _lim(rec, "q_min_mvar", where, -q_ratio * abs(d) * s_base) / s_base,
                _lim(rec, "q_max_mvar", where, q_ratio * abs(d) * s_base) / s_base,
            )
            v_lo, v_hi = _lim(rec, "v_min_pu", where, 0.0), _lim(rec, "v_max_pu", where, INF)
        try:
            buses.append(
                Bus(
                    id=bid,
                    kind=kind,
                    p_bounds=p_bounds,
                    q_bounds=q_bounds,
                    v_bounds=(v_lo * v_lo, v_hi * v_hi),
                    shunt_cap=cap,
                    virtual_of=rec.get("virtual_of"),
                )
            )
        except NetworkError as exc:
            raise ParseError(f"{where}: {exc}") from None

    lines = []
    for n, rec in enumerate(doc.get("lines", [])):
        where = f"lines[{n}]"
        try:
            a, b = int(rec["from"]), int(rec["to"])
        except (KeyError, TypeError, ValueError):
            raise ParseError(f"{where}: missing or bad 'from'/'to'") from None
        where = f"lines[{n}] ({a},{b})"
        try:
            lines.append(
                Line(
                    from_bus=a,
                    to_bus=b,
                    r=_num(rec, "r_ohm", where, 0.0) / z_base,
                    x=_num(rec, "x_ohm", where, 0.0) / z_base,
                    switch=rec.get("switch", CLOSED),
                    l_max=_lim(rec, "l_max_pu", where, INF),
                )
            )
        except NetworkError as exc:
            raise ParseError(f"{where}: {exc}") from None
    try:
        return Network(buses=tuple(buses), lines=tuple(lines), base=(v_base, s_base), name=doc.get("name", name))
    except NetworkError as exc:
        raise ParseError(str(exc)) from None


def _opt(val):
    return None if math.isinf(val) else val


def network_to_dict(net: Network) -> dict:
    """Inverse of :func:`parse_network` (reactive limits are always written out)."""
    v_base, s_base = net.base
    z_base = net.z_base
    buses = []
    for b in net.buses:
        rec = {"id": b.id, "kind": b.kind}
        if b.is_substation:
            rec["p_min_mw"] = _opt(b.p_bounds[0] * s_base)
            rec["p_max_mw"] = _opt(b.p_bounds[1] * s_base)
        else:
            rec["p_demand_mw"] = -b.p_bounds[1] * s_base
        rec["q_min_mvar"] = _opt(b.q_bounds[0] * s_base)
        rec["q_max_mvar"] = _opt(b.q_bounds[1] * s_base)
        rec["v_min_pu"] = _opt(math.sqrt(b.v_bounds[0]))
        rec["v_max_pu"] = _opt(math.sqrt(b.v_bounds[1]))
        if b.shunt_cap:
            rec["shunt_cap_mvar"] = b.shunt_cap * s_base
        if b.virtual_of is not None:
            rec["virtual_of"] = b.virtual_of
        buses.append(rec)
    lines = []
    for ln in net.lines:
        rec = {"from": ln.from_bus, "to": ln.to_bus, "r_ohm": ln.r * z_base, "x_ohm": ln.x * z_base, "switch": ln.switch}
        if math.isfinite(ln.l_max):
            rec["l_max_pu"] = ln.l_max
        lines.append(rec)
    return {
        "schema_version": SCHEMA_VERSION,
        "name": net.name,
        "base": {"v_base_kv": v_base, "s_base_mva": s_base},
        "buses": buses,
        "lines": lines,
    }


def dumps(net: Network) -> str:
    return json.dumps(network_to_dict(net), indent=1)


def bundled_text(name: str) -> str:
    if name not in BUNDLED:
        raise ParseError(f"unknown bundled dataset {name!r}; available: {', '.join(BUNDLED)}")
    return resources.files("optbranch.data").joinpath(f"{name}.json").read_text()


def bundled_checksum(name: str) -> str:
    return resources.files("optbranch.data").joinpath(f"{name}.sha256").read_text().strip()


def verify_bundled(name: str) -> bool:
    return hashlib.sha256(bundled_text(name).encode()).hexdigest() == bundled_checksum(name)


def load_network(source: Union[str, Path], q_ratio: float = DEFAULT_Q_RATIO) -> Network:
    """Load a network from a JSON file or a bundled dataset name (``sce56``)."""
    if isinstance(source, str) and source in BUNDLED:
        text, name = bundled_text(source), source
    else:
        path = Path(source)
        if not path.exists():
            raise ParseError(f"{path}: no such file (bundled datasets: {', '.join(BUNDLED)})")
        text, name = path.read_text(), path.stem
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{name}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return parse_network(doc, q_ratio=q_ratio, name=name)


def load_sce56(q_ratio: float = DEFAULT_Q_RATIO) -> Network:
    return load_network("sce56", q_ratio=q_ratio)
