import numpy as np
import pytest
from hypothesis import given, settings, strategies as hs

from scatlab import flow, metrics
from conftest import incoming, normal_form


@pytest.fixture(scope="module")
def euclid3():
    return metrics.euclidean(3)


def test_line_data_and_antipodal_prediction():
    bd_in, bd_out = flow.euclidean_line_data([0.0, 3.0, 0.0], [1.0, 0.0, 0.0])
    np.testing.assert_allclose(bd_in.y, [-1, 0, 0])
    np.testing.assert_allclose(bd_in.eta, [0, 3, 0])
    pred = flow.antipodal_prediction(bd_in)
    np.testing.assert_allclose(pred.y, bd_out.y)
    np.testing.assert_allclose(pred.eta, bd_out.eta)
    x0, v0 = flow.line_from_incoming(bd_in)
    np.testing.assert_allclose(x0, [0, 3, 0]) and np.testing.assert_allclose(v0, [1, 0, 0])


def test_boundary_data_rejects_bad_side():
    with pytest.raises(ValueError):
        flow.BoundaryData(np.zeros(2), np.zeros(2), "x")


@settings(max_examples=40, deadline=None)
@given(hs.lists(hs.floats(-5, 5), min_size=6, max_size=6))
def test_chart_round_trip(vals):
    model = normal_form()
    x, v = np.array(vals[:3]), np.array(vals[3:])
    if np.linalg.norm(x) < 1.0 or np.linalg.norm(v) < 1e-2:
        return
    Z = flow.cartesian_to_compact(model, x, v)
    x2, v2 = flow.compact_to_cartesian(model, Z)
    np.testing.assert_allclose(x2, x, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(v2, v, rtol=1e-10, atol=1e-10)


def test_rescaled_field_is_smooth_at_boundary():
    model = normal_form()
    y = np.array([0.0, 0.0, 1.0])
    eta = np.array([2.0, 0.0, 0.0])
    d = flow.rescaled_vector_field(model, flow.CompactState(0.0, y, 1.0, eta))
    assert np.all(np.isfinite(d.as_array()))
    assert d.rho == 1.0 and d.xi0 == 0.0
    # the boundary is invariant and carries the round cogeodesic flow
    np.testing.assert_allclose(d.y, eta, atol=1e-14)
    np.testing.assert_allclose(d.eta, -4.0 * y, atol=1e-14)


@pytest.mark.parametrize("eta_norm", [2.0, 5.0, 30.0])
def test_euclidean_exterior_travel_time(euclid3, eta_norm):
    bd = incoming(np.array([eta_norm, 0.0, 0.0]))
    _, out, tau_plus = flow.shoot_from_boundary(euclid3, bd)
    assert tau_plus == pytest.approx(np.pi / eta_norm, rel=1e-8)
    pred = flow.antipodal_prediction(bd)
    np.testing.assert_allclose(out.y, pred.y, atol=1e-9)
    np.testing.assert_allclose(out.eta, pred.eta, atol=1e-9 * eta_norm)


def test_euclidean_interior_geodesic_uses_both_charts(euclid3):
    bd = incoming(np.array([0.0, 0.4, 0.0]))
    traj, out, _ = flow.shoot_from_boundary(euclid3, bd)
    assert {s.chart for s in traj.segments} == {"compact", "cartesian"}
    np.testing.assert_allclose(out.y, -bd.y, atol=1e-9)
    np.testing.assert_allclose(out.eta, -bd.eta, atol=1e-9)


def test_aligned_time_on_euclidean_line(euclid3):
    bd = incoming(np.array([3.0, 0.0, 0.0]))
    traj, _, tau_plus = flow.shoot_from_boundary(euclid3, bd)
    # exact clock of the line at impact b: t = -b cot(b tau) = -1/tau + b^2 tau / 3 + O(tau^3)
    for tau in (0.01, 0.3, 0.9):
        assert traj.t_of_tau(tau) == pytest.approx(-3.0 / np.tan(3.0 * tau), rel=1e-9)
    c0, c1 = flow.fit_time_offset(traj, np.linspace(0.0005, 0.002, 6))
    assert abs(c0) < 1e-7 and c1 == pytest.approx(3.0, rel=1e-3)
    # the line with foot at t = 0: x(t) = eta + t * (-y)
    x, _ = traj.cartesian_state(4.0)
    np.testing.assert_allclose(x, [3.0, 0.0, 4.0], atol=1e-8)
    assert traj.tau_of_t(4.0) == pytest.approx(np.arctan2(4.0, 3.0) / 3.0 + np.pi / 6, rel=1e-9)


def test_state_at_time_agrees_with_shooting():
    model = normal_form()
    bd = incoming(np.array([1.5, 0.5, 0.0]))
    traj, _, _ = flow.shoot_from_boundary(model, bd)
    for t in (-20.0, 0.5, 15.0):
        st = flow.state_at_time(model, bd, t)
        x, v = traj.cartesian_state(t)
        np.testing.assert_allclose(st.x, x, atol=1e-7)
        np.testing.assert_allclose(st.v, v, atol=1e-7)


def test_energy_is_conserved(cae3):
    st = flow.CartesianState(np.array([-30.0, 1.0, 0.5]), np.array([1.0, 0.0, 0.0]))
    tr = flow.integrate_cartesian(cae3, st, (0.0, 60.0))
    assert tr.meta["energy_drift"] < 1e-9


def test_asymptotic_start_is_consistent(cae3):
    # starting the same asymptotic geodesic further out must not change the state at t = -300
    bd, _ = flow.euclidean_line_data([1.0, 2.0, 0.5], [0.3, -0.2, 1.0])
    x0, v0 = flow.line_from_incoming(bd)
    ref = flow.state_at_time(cae3, bd, -300.0)
    for T in (1000.0, 3000.0):
        st = flow.asymptotic_start(cae3, x0, v0, -T)
        Y = flow.integrate_cartesian(cae3, st, (-T, -300.0)).meta["sol"].y[:, -1]
        np.testing.assert_allclose(Y[:3], ref.x, atol=1e-7)
        np.testing.assert_allclose(Y[3:6], ref.v, atol=1e-9)


def test_naive_start_is_worse_than_tail_correction(cae3):
    bd, _ = flow.euclidean_line_data([1.0, 2.0, 0.5], [0.3, -0.2, 1.0])
    x0, v0 = flow.line_from_incoming(bd)
    ref = flow.state_at_time(cae3, bd, -300.0)
    T = 1000.0
    naive = flow.CartesianState(x0 - T * v0, v0)
    Yn = flow.integrate_cartesian(cae3, naive, (-T, -300.0)).meta["sol"].y[:, -1]
    Yc = flow.integrate_cartesian(cae3, flow.asymptotic_start(cae3, x0, v0, -T), (-T, -300.0)).meta["sol"].y[:, -1]
    assert np.linalg.norm(Yc[:3] - ref.x) < 1e-2 * np.linalg.norm(Yn[:3] - ref.x)


def test_geodesic_is_asymptotic_to_line(cae3):
    bd, _ = flow.euclidean_line_data([1.0, 2.0, 0.5], [0.3, -0.2, 1.0])
    x0, v0 = flow.line_from_incoming(bd)
    tr = flow.geodesic_from_boundary(cae3, bd, -2000.0, -20.0)
    ts = -np.geomspace(20, 2000, 10)
    d = [np.linalg.norm(tr.cartesian_state(t)[0] - (x0 + t * v0)) for t in ts]
    p = np.polyfit(np.log(-ts), np.log(d), 1)[0]
    # force ~ |t|^{-(m+1)} integrated twice: position error ~ |t|^{-(m-1)}, m = 3
    assert abs(p + 2.0) < 0.3


def test_extract_boundary_data_of_euclidean_segment(euclid3):
    st = flow.CartesianState(np.array([0.0, 2.0, -50.0]), np.array([0.0, 0.0, 1.0]))
    tr = flow.integrate_cartesian(euclid3, st, (0.0, 100.0))
    out = flow.extract_boundary_data(euclid3, tr, "+")
    inn = flow.extract_boundary_data(euclid3, tr, "-")
    np.testing.assert_allclose(out.y, [0, 0, 1], atol=1e-9)
    np.testing.assert_allclose(out.eta, [0, -2, 0], atol=1e-8)
    np.testing.assert_allclose(inn.y, [0, 0, -1], atol=1e-9)
    np.testing.assert_allclose(inn.eta, [0, 2, 0], atol=1e-8)


def test_conjugacy_is_identity_for_euclidean(euclid3):
    st = flow.conjugacy_theta(euclid3, [1.0, 2.0, 3.0], [0.0, 1.0, 0.0])
    np.testing.assert_allclose(st.x, [1, 2, 3], atol=1e-8)
    np.testing.assert_allclose(st.v, [0, 1, 0], atol=1e-10)


def test_reparametrize_switches_clock(euclid3):
    traj, _, _ = flow.shoot_from_boundary(euclid3, incoming(np.array([3.0, 0.0, 0.0])))
    assert flow.reparametrize(traj, "t").param == "t"
    with pytest.raises(ValueError):
        flow.reparametrize(traj, "s")


def test_shooting_needs_incoming_side(euclid3):
    with pytest.raises(ValueError):
        flow.shoot_from_boundary(euclid3, flow.BoundaryData(np.array([0, 0, 1.0]), np.zeros(3), "+"))


def test_shooting_needs_compact_chart(cae3):
    with pytest.raises(ValueError):
        flow.shoot_from_boundary(cae3, incoming(np.array([2.0, 0, 0])))
