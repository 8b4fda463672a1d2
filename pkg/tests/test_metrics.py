import numpy as np
import pytest
from hypothesis import given, settings, strategies as hs

from scatlab import metrics, sphere_tensors as st
from conftest import normal_form, random_cartesian_ae


def polar_frame(r, th):
    """Jacobian dx/du and second derivatives for x = r (cos th, sin th)."""
    J = np.array([[np.cos(th), -r * np.sin(th)], [np.sin(th), r * np.cos(th)]])
    H = np.zeros((2, 2, 2))  # H[k, b, c] = d^2 x^k / du^b du^c
    H[0, 0, 1] = H[0, 1, 0] = -np.sin(th)
    H[1, 0, 1] = H[1, 1, 0] = np.cos(th)
    H[0, 1, 1] = -r * np.cos(th)
    H[1, 1, 1] = -r * np.sin(th)
    return J, H


def polar_christoffel(model, r, th):
    J, H = polar_frame(r, th)
    x = r * np.array([np.cos(th), np.sin(th)])
    G = model.christoffel(x)
    inner = np.einsum("kij,ib,jc->kbc", G, J, J) + H
    return np.einsum("ak,kbc->abc", np.linalg.inv(J), inner)


def fd_christoffel(model, x, h=1e-5):
    """Koszul formula with central differences of the metric (independent oracle)."""
    n = x.size
    dg = np.empty((n, n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        dg[k] = (model.metric(x + e) - model.metric(x - e)) / (2 * h)
    low = 0.5 * (np.einsum("ilj->lij", dg) + np.einsum("jli->lij", dg) - np.einsum("lij->lij", dg))
    return np.einsum("kl,lij->kij", np.linalg.inv(model.metric(x)), low)


MODELS = {
    "euclidean": lambda: metrics.euclidean(3),
    "cone": lambda: metrics.cone2d(1.3),
    "normal_form": lambda: normal_form(),
    "cartesian": lambda: random_cartesian_ae(),
}


@pytest.mark.parametrize("name", list(MODELS))
def test_metric_symmetric_positive_definite(name):
    model = MODELS[name]()
    rng = np.random.default_rng(3)
    x = rng.normal(size=(200, model.dim)) * rng.uniform(0.1, 30, size=(200, 1))
    g = model.metric(x)
    assert np.max(np.abs(g - np.swapaxes(g, -1, -2))) < 1e-15
    assert np.linalg.eigvalsh(g).min() > 0


def test_euclidean_identity_and_zero_connection():
    m = metrics.euclidean(3)
    np.testing.assert_array_equal(metrics.eval_metric(m, [2.0, 0, 0]), np.eye(3))
    assert not np.any(metrics.christoffel(m, [1.0, 2, 3]))
    assert not np.any(metrics.riemann(m, [1.0, 2, 3]))


def test_zero_amplitude_normal_form_is_euclidean():
    m = normal_form(amplitude=0.0)
    x = np.random.default_rng(0).normal(size=(50, 3)) * 10
    np.testing.assert_allclose(m.metric(x), np.broadcast_to(np.eye(3), (50, 3, 3)), atol=1e-15)


def test_normal_form_is_flat_inside_taper_radius():
    m = normal_form()
    x = np.random.default_rng(1).normal(size=(50, 3))
    x *= (2.4 / np.linalg.norm(x, axis=1))[:, None]
    np.testing.assert_array_equal(m.metric(x), np.broadcast_to(np.eye(3), (50, 3, 3)))


@pytest.mark.parametrize("slope", [0.7, 1.3])
def test_cone_polar_components_outside_tip(slope):
    cone = metrics.cone2d(slope)
    # exterior warp f = slope r + offset, offset = -(5/8)(slope - 1) r0 (hand integral of the ramp)
    assert cone.offset == pytest.approx(-0.625 * (slope - 1.0), abs=1e-15)
    for r, th in [(1.5, 0.3), (7.0, 2.0), (40.0, -1.0)]:
        J, _ = polar_frame(r, th)
        gp = J.T @ cone.metric(r * np.array([np.cos(th), np.sin(th)])) @ J
        f = slope * r + cone.offset
        np.testing.assert_allclose(gp, np.diag([1.0, f * f]), rtol=1e-13, atol=1e-13)


@pytest.mark.parametrize("slope", [0.7, 1.3])
def test_cone_polar_christoffel(slope):
    cone = metrics.cone2d(slope)
    for r, th in [(0.5, 0.1), (2.0, 1.0), (9.0, -2.2)]:
        f, fp = cone.warp(r), cone.warp_slope(r)
        G = polar_christoffel(cone, r, th)
        assert G[0, 1, 1] == pytest.approx(-f * fp, rel=1e-10)
        assert G[1, 0, 1] == pytest.approx(fp / f, rel=1e-10)
        assert abs(G[0, 0, 0]) < 1e-12 and abs(G[1, 1, 1]) < 1e-10


def test_cone_slope_one_is_euclidean():
    np.testing.assert_allclose(metrics.cone2d(1.0).metric(np.array([[3.0, 1.0], [0.2, 0.1]])),
                               np.broadcast_to(np.eye(2), (2, 2, 2)), atol=1e-15)


@pytest.mark.parametrize("slope", [0.7, 1.3])
def test_cone_curvature_sign_and_exterior_flatness(slope):
    cone = metrics.cone2d(slope)
    r = np.linspace(0.01, 3.0, 300)
    K = cone.radial_curvature(r)
    assert np.all(np.sign(K[np.abs(K) > 0]) == np.sign(1 - slope))
    assert np.all(K[r >= 1.0] == 0)
    x = np.array([[1.7, 0.4], [0.5, 0.2], [-0.1, 0.45]])
    np.testing.assert_allclose(cone.gaussian_curvature(x), cone.radial_curvature(np.linalg.norm(x, axis=1)),
                               atol=1e-8)


@pytest.mark.parametrize("name", ["cone", "normal_form", "cartesian"])
def test_christoffel_matches_finite_difference_koszul(name):
    model = MODELS[name]()
    rng = np.random.default_rng(5)
    for _ in range(5):
        x = rng.normal(size=model.dim) * 4
        G = model.christoffel(x)
        np.testing.assert_allclose(G, fd_christoffel(model, x), rtol=1e-6, atol=1e-9)
        np.testing.assert_allclose(G, np.swapaxes(G, -1, -2), atol=1e-15)


@pytest.mark.parametrize("name", ["normal_form", "cartesian"])
def test_riemann_symmetries(name):
    model = MODELS[name]()
    x = np.array([3.1, -2.0, 1.2])
    Rl = np.einsum("ae,ebcd->abcd", model.metric(x), model.riemann(x))
    scale = np.abs(Rl).max()
    assert np.abs(Rl + np.swapaxes(Rl, 2, 3)).max() < 1e-7 * scale
    assert np.abs(Rl + np.swapaxes(Rl, 0, 1)).max() < 1e-7 * scale
    assert np.abs(Rl - np.transpose(Rl, (2, 3, 0, 1))).max() < 1e-7 * scale
    bianchi = Rl + np.transpose(Rl, (0, 2, 3, 1)) + np.transpose(Rl, (0, 3, 1, 2))
    assert np.abs(bianchi).max() < 1e-7 * scale


def test_sectional_curvature_of_constant_curvature_patch():
    from scatlab.riccati2d import hyperbolic_patch

    m = hyperbolic_patch(0.7)
    x = np.array([[0.0, 0.0], [1.0, 0.5], [2.0, -1.0]])
    np.testing.assert_allclose(m.gaussian_curvature(x), -0.49, rtol=1e-6)


def test_decay_report_normal_form():
    rep = metrics.validate_decay(normal_form(), n_dirs=24)
    assert rep.ok
    assert abs(rep.exponents["metric"] + 3) < 0.3
    assert abs(rep.exponents["curvature"] + 5) < 0.3


def test_decay_report_euclidean_passes_trivially():
    rep = metrics.validate_decay(metrics.euclidean(3))
    assert rep.ok and rep.exponents["metric"] == -np.inf


def test_decay_report_flags_mislabelled_order():
    def coeff(s, w):
        # true decay |x|^{-1} although the model claims m = 3
        return np.einsum("...,ij->...ij", s ** -2, np.diag([1.0, -0.5, 0.2])) * 0.1

    bad = metrics.cartesian_ae(3, 3, coefficients=coeff)
    rep = metrics.validate_decay(bad, n_dirs=24)
    assert not rep.passed["metric"]
    assert abs(rep.exponents["metric"] + 1) < 0.1


def test_sup_norms_scaled_by_decay_are_bounded(cae3):
    rep = metrics.validate_decay(cae3, n_dirs=24)
    R = rep.radii
    for vals, k in ((rep.sup_metric, 3), (rep.sup_christoffel, 4), (rep.sup_curvature, 5)):
        scaled = vals * R**k
        assert scaled.max() / scaled.min() < 3.0


def test_positivity_threshold_is_enforced():
    with pytest.raises(ValueError):
        normal_form(amplitude=-40.0)


def test_cone_rejects_bad_parameters():
    with pytest.raises(ValueError):
        metrics.cone2d(-1.0)


@settings(max_examples=20, deadline=None)
@given(hs.floats(0.3, 3.0), hs.floats(0.0, 2 * np.pi), hs.floats(0.05, 30.0))
def test_cone_metric_is_rotation_invariant(slope, angle, r):
    cone = metrics.cone2d(slope)
    Q = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    x = np.array([r, 0.0])
    np.testing.assert_allclose(cone.metric(Q @ x), Q @ cone.metric(x) @ Q.T, rtol=1e-12, atol=1e-12)
