import numpy as np
import pytest

from optbranch import synthetic as sy
from optbranch.branch_exchange import loop_for_tie
from optbranch.netmodel import CLOSED, INF, OPEN, SUBSTATION, Bus, Line, Network, NetworkError, validate_radial
from optbranch.opf import Objective
from optbranch.reconfig import configuration_cost, greedy_reconfigure


def _sub(i):
    return Bus(i, SUBSTATION, (0.0, INF), (-INF, INF), (1.0, 1.0))


def two_tie_network(seed=0):
    """Two substations (0 and 10), two feeders each side, two open ties."""
    rng = np.random.default_rng(seed)
    loads = [1, 2, 3, 4, 11, 12, 13, 14]
    buses = [_sub(0), _sub(10)] + [sy._load(i, float(rng.uniform(0.05, 0.3)), None, 0.1) for i in loads]

    def line(a, b, state=CLOSED):
        r = float(rng.uniform(0.005, 0.02))
        return Line(a, b, r, 2 * r, state)

    lines = [line(0, 1), line(1, 2), line(0, 3), line(3, 4), line(10, 11), line(11, 12), line(10, 13), line(13, 14)]
    lines += [line(2, 12, OPEN), line(4, 14, OPEN)]
    return Network(tuple(buses), tuple(lines))


def test_sce56_ends_at_table_optimum(sce56):
    trace = greedy_reconfigure(sce56)
    assert trace.converged
    assert trace.open_lines == [(20, 23)]
    assert trace.final_cost < trace.initial_cost
    assert [s.status for s in trace.steps] == ["exchanged", "kept"]


def test_fixed_point_has_no_exchanges(sce56):
    net = sce56.with_open([(20, 23)])
    trace = greedy_reconfigure(net)
    assert trace.converged and trace.exchanges == []
    assert trace.open_lines == [(20, 23)]


def _loop_costs(net, key):
    """Cost of every radial configuration reachable by exchanging the open line ``key``."""
    joined, path = loop_for_tie(net, net.find_line(*key))
    closed = net.with_switch(net.find_line(*key), CLOSED)
    back = {b.id: b.virtual_of for b in joined.buses if b.virtual_of is not None}
    out = {}
    for ln in path.lines:
        a, b = back.get(ln.from_bus, ln.from_bus), back.get(ln.to_bus, ln.to_bus)
        cand = closed.with_switch(closed.find_line(a, b), OPEN)
        out[cand.find_line(a, b).key] = configuration_cost(cand, Objective.aggregate())
    return out


@pytest.mark.parametrize("seed", range(3))
def test_two_ties_local_optimum(seed):
    net = two_tie_network(seed)
    trace = greedy_reconfigure(net)
    assert trace.converged
    ties = {s.tie for s in trace.steps}
    assert {(2, 12), (4, 14)} <= ties | {s.opened for s in trace.steps}
    costs = [trace.initial_cost] + [s.cost_after for s in trace.exchanges]
    assert all(b <= a + 1e-9 for a, b in zip(costs, costs[1:]))
    final = trace.network
    assert validate_radial(final).ok
    for key in trace.open_lines:
        assert min(_loop_costs(final, key).values()) >= trace.final_cost - 1e-7


def test_every_step_radial():
    net = two_tie_network(1)
    trace = greedy_reconfigure(net)
    current = net
    for s in trace.steps:
        if s.status == "exchanged":
            current = current.with_switch(current.find_line(*s.tie), CLOSED).with_switch(current.find_line(*s.opened), OPEN)
            assert validate_radial(current).ok


def test_loop_off_substation_skipped():
    buses = [_sub(0)] + [sy._load(i, 0.1, None, 0.1) for i in (1, 2, 3)]
    lines = [Line(0, 1, 0.01, 0.02), Line(1, 2, 0.01, 0.02), Line(1, 3, 0.01, 0.02), Line(2, 3, 0.01, 0.02, OPEN)]
    trace = greedy_reconfigure(Network(tuple(buses), tuple(lines)))
    assert trace.converged
    assert [s.status for s in trace.steps] == ["skipped"]


def test_rejects_meshed_start():
    net = two_tie_network().with_open([])
    with pytest.raises(NetworkError):
        greedy_reconfigure(net)


def test_trace_serializes(sce56):
    d = greedy_reconfigure(sce56).to_dict(sce56.base[1])
    assert d["converged"] and d["open_lines"] == [[20, 23]]
    assert d["steps"][0]["tie"] == [32, 1]
