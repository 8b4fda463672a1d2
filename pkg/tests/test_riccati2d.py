import numpy as np
import pytest
from hypothesis import given, settings, strategies as hs

from scatlab import metrics, riccati2d as rc


def small_ae():
    return metrics.cartesian_ae(2, 3, C=0.05 * np.array([[1.0, 0.3], [0.3, -0.5]]), L=0.02 * np.ones((2, 2, 2)))


# --- synthetic surfaces ----------------------------------------------------


@pytest.mark.parametrize("a", [0.3, 0.5, 1.0])
def test_hyperbolic_patch_has_constant_curvature(a):
    s = rc.surface(rc.hyperbolic_patch(a))
    x = np.array([[0.0, 0.0], [0.5, -0.3], [2.0, 1.0], [1e-3, 0.0]])
    np.testing.assert_allclose(s.K_from_riemann(x), -a * a, rtol=1e-6)
    np.testing.assert_array_equal(s.K(x), -a * a)


def test_hyperbolic_patch_is_geodesic_polar():
    # radial lines are unit-speed geodesics and circles have length 2 pi sinh(a r)/a
    m = rc.hyperbolic_patch(0.5)
    x = np.array([3.0, 0.0])
    g = m.metric(x)
    assert g[0, 0] == pytest.approx(1.0, abs=1e-14)
    assert np.sqrt(g[1, 1]) * 3.0 == pytest.approx(np.sinh(1.5) / 0.5 * 1.0, rel=1e-12)


@pytest.mark.parametrize("model", [metrics.cone2d(1.3), metrics.cone2d(0.7), small_ae()], ids=["c13", "c07", "ae"])
def test_analytic_and_riemann_curvature_agree(model):
    s = rc.surface(model)
    x = np.array([[3.0, 1.0], [0.9, 0.2], [0.5, 0.1]])
    np.testing.assert_allclose(s.K(x), s.K_from_riemann(x), atol=1e-7)


def test_surface_requires_two_dimensions():
    with pytest.raises(ValueError):
        rc.surface(metrics.euclidean(3))


# --- boundary problem / Hopf limit ----------------------------------------


@settings(max_examples=20, deadline=None)
@given(hs.floats(0.1, 2.0), hs.floats(0.5, 8.0))
def test_boundary_problem_constant_negative_curvature(c, T):
    # y'' = c^2 y, y(T) = 0, y'(T) = -1  =>  y = sinh(c(T - t))/c, u = -c coth(c T)
    u, ymin = rc._boundary_problem(lambda t: -c * c, 0.0, T)
    assert u == pytest.approx(-c / np.tanh(c * T), rel=1e-9)
    assert ymin > 0


def test_flat_plane_hopf_limit():
    s = rc.surface(metrics.euclidean(2))
    r = rc.hopf_u(s, np.zeros(2), np.array([1.0, 0.0]))
    np.testing.assert_allclose(r.values, -1.0 / r.ladder, rtol=1e-10)
    assert abs(r.u) <= 1e-4 and r.converged and r.monotone
    assert r.u >= -r.sturm_bound - 1e-15


def test_hyperbolic_hopf_limit():
    s = rc.surface(rc.hyperbolic_patch(0.5))
    r = rc.hopf_u(s, np.zeros(2), np.array([1.0, 0.0]), T_ladder=(5, 10, 20, 30))
    assert r.u == pytest.approx(-0.5, abs=1e-8)
    assert r.sturm_bound == pytest.approx(0.5 / np.tanh(15.0), rel=1e-12)
    assert r.u >= -r.sturm_bound - 1e-12
    assert r.monotone


def test_ladder_non_convergence_carries_report():
    s = rc.surface(metrics.euclidean(2))
    with pytest.raises(rc.LadderNonConvergence) as exc:
        rc.hopf_u(s, np.zeros(2), np.array([1.0, 0.0]), T_ladder=(1.0, 2.0))
    assert exc.value.report is not None and len(exc.value.report.values) == 2


def test_conjugate_points_are_reported():
    s = rc.surface(metrics.cone2d(0.7))
    for scan in (False, True):
        with pytest.raises(rc.ConjugatePointError):
            rc.hopf_u(s, np.array([-3.0, 0.0]), np.array([1.0, 0.0]), T_ladder=(100.0, 300.0), scan=scan)


@pytest.fixture(scope="module")
def ae_point():
    s = rc.surface(small_ae())
    return s, rc.hopf_u(s, np.array([4.0, 0.0]), np.array([0.0, 1.0]))


def test_ae_hopf_limit_converges(ae_point):
    _, r = ae_point
    assert r.converged and abs(r.u) < 1e-2
    assert r.u >= -r.sturm_bound


def test_riccati_residual(ae_point):
    s, r = ae_point
    res = rc.riccati_residual(s, np.array([4.0, 0.0]), np.array([0.0, 1.0]))
    assert res.max < 1e-5
    flat = rc.riccati_residual(rc.surface(metrics.euclidean(2)), np.zeros(2), np.array([1.0, 0.0]))
    assert flat.max < 1e-5


# --- Gauss-Bonnet -----------------------------------------------------------


def test_flat_boundary_terms():
    for j in (1.0, 3.0, 20.0):
        length, kint, _ = rc.boundary_curve_terms(metrics.euclidean(2), j)
        assert length == pytest.approx(2 * np.pi * j, rel=1e-14)
        assert kint == pytest.approx(2 * np.pi, rel=1e-14)


@pytest.mark.parametrize("slope", [0.7, 1.3])
def test_cone_audit(slope):
    rows = rc.gauss_bonnet_audit(rc.surface(metrics.cone2d(slope)), [1, 2, 8, 32])
    for r in rows:
        assert abs(r.defect) < 1e-10
        assert r.boundary_curvature == pytest.approx(2 * np.pi * slope, rel=1e-10)
        assert r.area_curvature == pytest.approx(2 * np.pi * (1 - slope), rel=1e-8)
        # exterior circles of the flat cone: length 2 pi (slope j + offset)
        assert r.length == pytest.approx(2 * np.pi * (slope * r.j + metrics.cone2d(slope).offset), rel=1e-10)


@pytest.mark.parametrize("model", [metrics.euclidean(2), small_ae(), rc.hyperbolic_patch(0.5)],
                         ids=["flat", "ae", "hyperbolic"])
def test_gauss_bonnet_defect_small(model):
    for r in rc.gauss_bonnet_audit(rc.surface(model), [1, 2, 4, 8]):
        assert abs(r.defect) < 1e-6


def test_hyperbolic_audit_matches_closed_form():
    a, j = 0.5, 4.0
    (r,) = rc.gauss_bonnet_audit(rc.surface(rc.hyperbolic_patch(a)), [j])
    assert r.area_curvature == pytest.approx(-2 * np.pi * (np.cosh(a * j) - 1), rel=1e-9)
    assert r.length == pytest.approx(2 * np.pi * np.sinh(a * j) / a, rel=1e-9)


def test_audit_rejects_small_balls():
    with pytest.raises(ValueError):
        rc.gauss_bonnet_audit(rc.surface(metrics.euclidean(2)), [0.5])


# --- checklist ----------------------------------------------------------------


def test_flat_checklist_passes():
    rep = rc.rigidity_checklist(rc.surface(metrics.euclidean(2)), j_max=32, samples=8)
    assert rep.passed and rep.decay_exponent == -np.inf
    assert np.all(rep.convexity_margin >= 0)


@pytest.mark.parametrize("slope", [0.7, 1.3])
def test_cone_checklist_fails_only_length_hypothesis(slope):
    rep = rc.rigidity_checklist(rc.surface(metrics.cone2d(slope)), j_max=32, samples=8)
    assert rep.hypotheses == {"i": True, "ii": True, "iii": False}
    assert not rep.passed


def test_ae_checklist_passes():
    rep = rc.rigidity_checklist(rc.surface(small_ae()), j_max=32, samples=8)
    assert rep.passed
    assert abs(rep.decay_exponent + 3) < 0.3


def neck_surface():
    # circle length 2 pi r sqrt(1 - 1.9 chi(r) / r) decreases on r in (2.8, 3.5): a neck with concave circles
    coeff = lambda s, w: -1.9 * (np.eye(2) - w[..., :, None] * w[..., None, :])
    return rc.surface(metrics.cartesian_ae(2, 1, coefficients=coeff))


def test_convexity_probe_detects_reentry():
    assert rc.convexity_probe(neck_surface(), 3.0, samples=4, horizon=25.0) < -1e-3
    assert rc.convexity_probe(rc.surface(metrics.cone2d(0.3)), 0.3, samples=4, horizon=30.0) >= -1e-9
