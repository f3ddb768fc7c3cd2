import math

import numpy as np
import pytest

from optbranch import opf
from optbranch import synthetic as sy
from optbranch.netmodel import INF, LOAD, SUBSTATION, Bus, Line, Network
from optbranch.opf import Infeasible, Objective, OpfSettings
from optbranch.powerflow import residuals


def two_bus(d=0.5, r=0.02, x=0.05, p_max=INF):
    """Substation 0 at |V| = 1 feeding a unity power factor load ``d`` at bus 1."""
    buses = (Bus(0, SUBSTATION, (0.0, p_max), (-INF, INF), (1.0, 1.0)), Bus(1, LOAD, (-d, -d), (0.0, 0.0), (0.5, 1.5)))
    return Network(buses, (Line(0, 1, r, x),))


def two_bus_injection(d, r, x):
    # l = P^2 + Q^2 with P = d + r l, Q = x l: |z|^4... reduces to |z|^2 l^2 + (2 d r - 1) l + d^2 = 0
    z2 = r * r + x * x
    b = 2 * d * r - 1
    l = (-b - math.sqrt(b * b - 4 * z2 * d * d)) / (2 * z2)
    return d + r * l


@pytest.mark.parametrize("d,r,x", [(0.5, 0.02, 0.05), (1.0, 0.01, 0.03), (0.2, 0.05, 0.05)])
def test_two_bus_closed_form(d, r, x):
    res = opf.solve_opf(two_bus(d, r, x))
    assert res.exact
    assert res.objective == pytest.approx(two_bus_injection(d, r, x), abs=1e-9)


def test_infeasible_capacity():
    with pytest.raises(Infeasible):
        opf.solve_opf(two_bus(p_max=0.1))


def test_variable_layout():
    net = two_bus()
    prob, lay = opf.assemble_sopf(net, Objective.aggregate())
    n, m = len(net.buses), len(net.lines)
    assert prob.n == 3 * n + 3 * m
    assert len(lay.v) == n and len(lay.l) == m


def test_sce56_exact(sce56, sce56_loop, sce56_full):
    joined, _ = sce56_loop
    assert sce56_full.exact and sce56_full.max_soc_gap <= 1e-6
    assert residuals(joined, sce56_full.x).max_equation_residual < 1e-9
    res = opf.solve_opf(sce56)
    assert res.exact and res.max_equation_residual < 1e-9
    # radial configuration with (32,1) open: the last row of the enumeration
    assert res.objective == pytest.approx(3.93636, abs=1e-4)


def test_voltage_limits_respected(sce56):
    res = opf.solve_opf(sce56)
    v = np.sqrt(res.x.v)
    assert v.min() >= 0.97 - 1e-9 and v.max() <= 1.03 + 1e-9


def test_a2_pins_voltages(a2):
    net, path = sy.two_feeder(np.random.default_rng(0), 5, equal_voltage=False)
    res = opf.solve_opf(net, settings=a2, roots=(path.start, path.end))
    for i, b in enumerate(res.x.bus_ids):
        assert res.x.v[i] == pytest.approx(net.bus(b).v_bounds[0], abs=1e-9)
    assert res.exact


def test_a2_uses_nominal_for_free_buses():
    net = two_bus()
    res = opf.solve_opf(net, settings=OpfSettings(mode=opf.A2, v_nominal=0.98**2))
    assert res.x.v[1] == pytest.approx(0.98**2, abs=1e-9)


def test_dead_lines_presolve(sce56):
    dead = opf.dead_lines(sce56)
    assert dead  # SCE-56 has zero-load leaf buses
    for key in dead:
        a, b = key
        assert 0 in (sce56.bus(a).demand, sce56.bus(b).demand)
    res = opf.solve_opf(sce56)
    for key in dead:
        k = res.x.line_pos(key)
        assert abs(res.x.P[k]) < 1e-15 and abs(res.x.l[k]) < 1e-15


def test_fixed_p0_symmetry():
    net, path = sy.three_bus(0.01, 0.02, 0.4)
    roots = (path.start, path.end)
    settings = OpfSettings(mode=opf.A2)
    for p0 in (0.05, 0.15, 0.25):
        f = opf.solve_opf_fixed_p0(net, p0, roots, settings).objective
        assert opf.solve_opf_fixed_p0(net, f, roots, settings).objective == pytest.approx(p0, abs=1e-7)


def test_min_injection_matches_two_bus():
    net = two_bus(0.3, 0.03, 0.04)
    assert opf.min_injection(net, 0) == pytest.approx(two_bus_injection(0.3, 0.03, 0.04), abs=1e-9)


def test_linear_weights_move_the_split(a2):
    net, path = sy.two_feeder(np.random.default_rng(3), 4)
    roots = (path.start, path.end)
    cheap0 = opf.solve_opf(net, Objective.linear(1.0, 3.0), a2, roots)
    cheap1 = opf.solve_opf(net, Objective.linear(3.0, 1.0), a2, roots)
    assert cheap0.injection(path.start) > cheap1.injection(path.start)


def test_quadratic_objective(a2):
    net, path = sy.two_feeder(np.random.default_rng(4), 3)
    roots = (path.start, path.end)
    obj = Objective("quadratic", 1.0, 1.0, 2.0, 0.5)
    res = opf.solve_opf(net, obj, a2, roots)
    p0, p1 = res.injection(path.start), res.injection(path.end)
    assert res.objective == pytest.approx(obj(p0, p1), abs=1e-7)
    # the pinned-p0 value function gives the same optimum
    grid = np.linspace(p0 - 0.02, p0 + 0.02, 9)
    vals = [obj(g, opf.solve_opf_fixed_p0(net, g, roots, a2).objective) for g in grid]
    assert min(vals) >= res.objective - 1e-9


def test_objective_parse():
    assert Objective.parse("aggregate") == Objective.aggregate()
    assert Objective.parse("linear:1,2") == Objective.linear(1.0, 2.0)
    assert Objective.parse("quadratic:1,2,3,4").a0p == 4.0
    with pytest.raises(ValueError):
        Objective.parse("linear:1")
    with pytest.raises(ValueError):
        Objective.linear(-1.0, 1.0)
    assert Objective.aggregate()(math.inf, 1.0) == math.inf


def test_tolerance_override(monkeypatch):
    monkeypatch.setenv(opf.TOL_ENV, "1e-7")
    s = opf.default_solver_settings()
    assert s.tol_primal == s.tol_dual == s.tol_gap == 1e-7


def test_record_solves():
    net, _ = sy.three_bus()
    with opf.record_solves() as log:
        res = opf.solve_opf(net)
    assert log == [(net, res)]
    opf.solve_opf(net)
    assert len(log) == 1
