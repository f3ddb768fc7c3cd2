import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from optbranch import synthetic as sy
from optbranch.powerflow import (
    DimensionMismatch,
    NotExact,
    OperatingPoint,
    check_assumption_A3,
    exactness,
    ohm_residuals,
    recover_angles,
    residuals,
    soc_gaps,
    total_loss,
)


def phasor_point(net, rng):
    """An exact operating point built from random complex bus voltages."""
    ids = tuple(net.bus_ids)
    pos = {b: i for i, b in enumerate(ids)}
    V = rng.uniform(0.95, 1.05, len(ids)) * np.exp(1j * rng.uniform(-0.05, 0.05, len(ids)))
    keys, P, Q, L = [], [], [], []
    s = np.zeros(len(ids), dtype=complex)
    for ln in net.closed_lines:
        i, j = pos[ln.from_bus], pos[ln.to_bus]
        z = complex(ln.r, ln.x)
        I = (V[i] - V[j]) / z
        S = V[i] * I.conjugate()
        keys.append(ln.key)
        P.append(S.real)
        Q.append(S.imag)
        L.append(abs(I) ** 2)
        s[i] += S
        s[j] -= S - z * abs(I) ** 2
    x = OperatingPoint(ids, tuple(keys), s.real, s.imag, P, Q, L, np.abs(V) ** 2)
    return x, np.angle(V)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 25), st.integers(0, 2**32 - 1))
def test_phasor_points_satisfy_branch_flow(n, seed):
    rng = np.random.default_rng(seed)
    net = sy.random_tree(rng, n)
    x, _ = phasor_point(net, rng)
    rep = residuals(net, x)
    assert rep.max_equation_residual < 1e-12
    assert np.abs(soc_gaps(net, x)).max() < 1e-10


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 25), st.integers(0, 2**32 - 1))
def test_angle_recovery_reproduces_phasors(n, seed):
    rng = np.random.default_rng(seed)
    net = sy.random_tree(rng, n)
    x, ang = phasor_point(net, rng)
    y = recover_angles(net, x)
    shift = y.theta - ang
    assert np.ptp(shift) < 1e-9  # equal up to the reference angle
    assert ohm_residuals(net, y).max() < 1e-12
    assert check_assumption_A3(net, y) == []


def test_relaxed_slack_detected():
    rng = np.random.default_rng(1)
    net = sy.random_tree(rng, 5)
    x, _ = phasor_point(net, rng)
    l = x.l.copy()
    l[0] *= 1.5
    loose = OperatingPoint(x.bus_ids, x.line_keys, x.p, x.q, x.P, x.Q, l, x.v)
    assert exactness(net, loose) == [x.line_keys[0]]
    with pytest.raises(NotExact):
        recover_angles(net, loose)


def test_loss_and_dimension_checks():
    rng = np.random.default_rng(2)
    net = sy.random_tree(rng, 6)
    x, _ = phasor_point(net, rng)
    # losses equal the net real injection
    assert total_loss(net, x) == pytest.approx(x.p.sum(), abs=1e-12)
    with pytest.raises(DimensionMismatch):
        OperatingPoint(x.bus_ids, x.line_keys, x.p[:-1], x.q, x.P, x.Q, x.l, x.v)


def test_flow_in_both_orientations():
    rng = np.random.default_rng(3)
    net = sy.random_tree(rng, 4)
    x, _ = phasor_point(net, rng)
    a, b = x.line_keys[0]
    ln = net.find_line(a, b)
    assert x.flow(a, b, net) + x.flow(b, a, net) == pytest.approx(x.l[0] * ln.r)


def test_dict_round_trip():
    rng = np.random.default_rng(4)
    net = sy.random_tree(rng, 5)
    x = recover_angles(net, phasor_point(net, rng)[0])
    y = OperatingPoint.from_dict(x.to_dict())
    assert y.line_keys == x.line_keys
    assert np.array_equal(y.theta, x.theta) and np.array_equal(y.l, x.l)


def test_phase_difference_formula():
    # a single line: the recovered angle difference is the angle of the drop
    rng = np.random.default_rng(5)
    net = sy.random_tree(rng, 2)
    x, ang = phasor_point(net, rng)
    y = recover_angles(net, x)
    assert y.theta[0] - y.theta[1] == pytest.approx(ang[0] - ang[1], abs=1e-12)
