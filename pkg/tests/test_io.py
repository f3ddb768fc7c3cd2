import json

import pytest

from optbranch.io import (
    ParseError,
    SchemaVersionMismatch,
    dumps,
    load_network,
    network_to_dict,
    parse_network,
    verify_bundled,
)


def _doc(**extra):
    doc = {
        "schema_version": 1,
        "base": {"v_base_kv": 12.0, "s_base_mva": 1.0},
        "buses": [
            {"id": 1, "kind": "substation"},
            {"id": 2, "p_demand_mw": 0.5, "v_min_pu": 0.97, "v_max_pu": 1.03},
        ],
        "lines": [{"from": 1, "to": 2, "r_ohm": 144.0, "x_ohm": 288.0}],
    }
    doc.update(extra)
    return doc


def test_per_unit_conversion():
    net = parse_network(_doc())
    ln = net.lines[0]
    assert ln.r == 1.0 and ln.x == 2.0
    b = net.bus(2)
    assert b.p_bounds == (-0.5, -0.5)
    assert b.q_bounds == pytest.approx((-0.05, 0.05))
    assert b.v_bounds == pytest.approx((0.97**2, 1.03**2))


def test_q_ratio_knob():
    assert parse_network(_doc(), q_ratio=0.5).bus(2).q_bounds == pytest.approx((-0.25, 0.25))


def test_duplicate_bus_rejected():
    doc = _doc()
    doc["buses"].append({"id": 2, "p_demand_mw": 0.1})
    with pytest.raises(ParseError, match="duplicate"):
        parse_network(doc)


def test_bad_field_context():
    doc = _doc()
    doc["lines"][0]["r_ohm"] = "abc"
    with pytest.raises(ParseError, match=r"lines\[0\]"):
        parse_network(doc)


def test_schema_version():
    with pytest.raises(SchemaVersionMismatch):
        parse_network(_doc(schema_version=2))


def test_round_trip(tmp_path):
    net = parse_network(_doc())
    path = tmp_path / "net.json"
    path.write_text(dumps(net))
    again = load_network(str(path))
    assert again.buses == net.buses and again.lines == net.lines and again.base == net.base


def test_engineering_units_round_trip(sce56):
    d = network_to_dict(sce56)
    again = parse_network(json.loads(json.dumps(d)))
    for a, b in zip(sce56.lines, again.lines):
        assert b.r == pytest.approx(a.r, rel=1e-12) and b.x == pytest.approx(a.x, rel=1e-12)
    assert again == sce56


def test_sce56_contents(sce56):
    assert len(sce56.buses) == 56
    assert len(sce56.lines) == 56
    assert sce56.bus(3).demand == pytest.approx(0.057)
    tie = sce56.find_line(32, 1)
    assert tie.r * sce56.z_base == pytest.approx(0.085)
    assert tie.x * sce56.z_base == pytest.approx(0.278)
    for b in (19, 21, 30, 53):
        assert sce56.bus(b).shunt_cap == pytest.approx(0.6)
    assert sce56.z_base == 144.0


def test_bundled_checksum():
    assert verify_bundled("sce56")


def test_missing_file():
    with pytest.raises(ParseError, match="no such file"):
        load_network("/nonexistent/net.json")
