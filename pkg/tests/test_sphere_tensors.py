import numpy as np
import pytest
from hypothesis import given, settings, strategies as hs

from scatlab import sphere_tensors as st


def random_sphere(rng, n, k):
    y = rng.normal(size=(k, n))
    return y / np.linalg.norm(y, axis=1, keepdims=True)


def random_tangent(rng, y):
    v = rng.normal(size=y.shape)
    v -= np.sum(v * y, axis=-1, keepdims=True) * y
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def circle(rng, n):
    return st.GreatCircle.from_vectors(rng.normal(size=n), rng.normal(size=n))


# --- great circles --------------------------------------------------------


def test_great_circle_special_points():
    c = st.GreatCircle.from_vectors([0.0, 0.0, 2.0], [1.0, 0.0, 0.7])
    np.testing.assert_allclose(c.y, [0, 0, 1])
    np.testing.assert_allclose(c.eta_hat, [1, 0, 0])
    for s, (p, t) in [(0.0, (c.y, c.eta_hat)), (np.pi, (-c.y, -c.eta_hat)), (np.pi / 2, (c.eta_hat, -c.y))]:
        pos, tan = st.great_circle_point(c, s)
        np.testing.assert_allclose(pos, p, atol=1e-15)
        np.testing.assert_allclose(tan, t, atol=1e-15)


@settings(max_examples=30)
@given(hs.integers(0, 10_000), hs.floats(-20, 20))
def test_great_circle_orthonormal_and_periodic(seed, s):
    rng = np.random.default_rng(seed)
    c = circle(rng, 4)
    pos, tan = st.great_circle_point(c, s)
    assert abs(pos @ pos - 1) < 1e-12 and abs(tan @ tan - 1) < 1e-12 and abs(pos @ tan) < 1e-12
    pos2, tan2 = st.great_circle_point(c, s + 2 * np.pi)
    np.testing.assert_allclose(pos2, pos, atol=1e-12)


# --- weighted X-ray -------------------------------------------------------


def test_xray_of_constant():
    c = circle(np.random.default_rng(0), 3)
    one = st.constant_function(3)
    assert st.weighted_xray(one, c) == pytest.approx(2 * np.pi, rel=1e-15)


def test_xray_sine_moments_have_ratio_four_fifths():
    c = circle(np.random.default_rng(0), 3)
    one = st.constant_function(3)
    i3 = st.weighted_xray(one, c, 3, 0, "half")
    i5 = st.weighted_xray(one, c, 5, 0, "half")
    # odd sine powers are not smooth under periodic extension of [0, pi]: trapezoid error O(N^-4)
    assert i3 == pytest.approx(4 / 3, abs=1e-11)
    assert i5 == pytest.approx(16 / 15, abs=1e-11)
    assert i5 / i3 == pytest.approx(4 / 5, abs=1e-11)


def test_xray_cosine_weight_against_closed_form():
    # int_0^{2pi} cos^2 s (y0 . gamma(s)) ... with f = (a . y)^2: a = y gives int cos^4 = 3pi/4
    c = st.GreatCircle.from_vectors([1.0, 0, 0], [0, 1.0, 0])
    f = st.polynomial_tensor(3, {(2, 0, 0): 1.0}, [])
    assert st.weighted_xray(f, c, 0, 2) == pytest.approx(3 * np.pi / 4, rel=1e-14)


def test_xray_of_odd_function_vanishes():
    rng = np.random.default_rng(2)
    f = st.linear_function(3, rng.normal(size=3))
    assert abs(st.weighted_xray(f, circle(rng, 3))) < 1e-13


def test_xray_requires_even_grid():
    with pytest.raises(ValueError):
        st.weighted_xray(st.constant_function(3), circle(np.random.default_rng(0), 3), N=101)


@pytest.mark.parametrize("seed", range(5))
def test_xray_of_potential_vanishes(seed):
    rng = np.random.default_rng(seed)
    k = st.random_polynomial_tensor(3, 2, rng)
    Dk = st.sym_derivative(k)
    for _ in range(3):
        assert abs(st.weighted_xray(Dk, circle(rng, 3), N=256)) < 1e-10


# --- derivative, trace, divergence ---------------------------------------


def test_derivative_of_constant_is_zero():
    y = random_sphere(np.random.default_rng(0), 3, 10)
    assert np.abs(st.sym_derivative(st.constant_function(3, 2.5)).tensor(y)).max() < 1e-15


def test_gradient_of_linear_function():
    f = st.linear_function(3, [1.0, 0, 0])
    D = st.sym_derivative(f).tensor(np.array([0.0, 1.0, 0.0]))
    np.testing.assert_allclose(D, [1.0, 0.0, 0.0], atol=1e-14)


def test_gradient_matches_finite_difference_along_curve():
    rng = np.random.default_rng(4)
    f = st.polynomial_tensor(3, {(1, 2, 0): 1.0, (0, 0, 3): -0.5}, [])
    c = circle(rng, 3)
    h = 1e-5
    fd = (f(st.great_circle_point(c, h)[0]) - f(st.great_circle_point(c, -h)[0])) / (2 * h)
    D = st.sym_derivative(f)(c.y, c.eta_hat)
    assert D == pytest.approx(fd, rel=1e-8)


def test_rotation_killing_fields_are_killing():
    y = random_sphere(np.random.default_rng(1), 4, 20)
    assert np.abs(st.sym_derivative(st.rotation_killing(4, 0, 2, rank=1)).tensor(y)).max() < 1e-8
    K2 = st.rotation_killing(4, 1, 3)
    assert np.abs(st.sym_derivative(K2).tensor(y)).max() < 1e-8


def test_round_metric_trace_and_divergence():
    y = random_sphere(np.random.default_rng(2), 4, 20)
    tr, dv = st.trace_and_divergence(st.round_metric(4))
    np.testing.assert_allclose(tr.tensor(y), 3.0, atol=1e-14)
    assert np.abs(dv.tensor(y)).max() < 1e-12


def test_divergence_of_gradient_is_minus_laplacian():
    # degree-l spherical harmonic on S^2: Laplacian eigenvalue l(l+1); D* D f = -Delta f = l(l+1) f
    f = st.polynomial_tensor(3, {(1, 1, 0): 1.0}, [])
    y = random_sphere(np.random.default_rng(3), 3, 10)
    lap = st.divergence(st.sym_derivative(f)).tensor(y)
    np.testing.assert_allclose(lap, 6.0 * f.tensor(y), atol=1e-8)


@pytest.mark.parametrize("seed", range(10))
def test_trace_commutation_identity(seed):
    rng = np.random.default_rng(100 + seed)
    n = 3 + seed % 2
    h = st.random_polynomial_tensor(n, 2, rng)
    y = random_sphere(rng, n, 10)
    lhs = st.trace(st.sym_derivative(h)).tensor(y)
    rhs = st.sym_derivative(st.trace(h)).tensor(y) - 2 * st.divergence(h).tensor(y)
    assert np.abs(lhs - rhs).max() < 1e-6


def test_field_values_depend_only_on_tangential_parts():
    rng = np.random.default_rng(5)
    h = st.random_polynomial_tensor(3, 2, rng)
    y = random_sphere(rng, 3, 1)[0]
    u, v = random_tangent(rng, y[None])[0], random_tangent(rng, y[None])[0]
    assert h(y, u + 3 * y, v - 2 * y) == pytest.approx(h(y, u, v), abs=1e-13)
    assert h(y, u, v) == pytest.approx(h(y, v, u), abs=1e-13)


def test_rank_cap():
    h = st.random_polynomial_tensor(3, 3, np.random.default_rng(0))
    with pytest.raises(ValueError):
        st.sym_derivative(h)
    with pytest.raises(ValueError):
        st.SymTensorField(4, 3, lambda y: y)


# --- Killing energy derivative -------------------------------------------


def test_energy_derivative_vanishes_for_killing_combinations():
    rng = np.random.default_rng(7)
    h = st.sum_fields([st.round_metric(3), st.rotation_killing(3, 0, 1)], [0.7, 1.3])
    y = random_sphere(rng, 3, 20)
    e = random_tangent(rng, y)
    assert np.abs(st.killing_energy_derivative(h, y, e)).max() < 1e-8
    assert np.abs(st.killing_energy_derivative(st.round_metric(3), y, e)).max() < 1e-12


def test_energy_derivative_is_flow_derivative_of_energy():
    # d/ds h(gamma, gamma') along the great circle equals (nabla_gamma' h)(gamma', gamma')
    h = st.x1_squared_weighted(3)
    c = st.GreatCircle.from_vectors([0.6, 0.8, 0.0], [0.1, -0.3, 1.0])
    e = lambda s: h(*[st.great_circle_point(c, s)[0]], *[st.great_circle_point(c, s)[1]] * 2)
    fd = (e(1e-5) - e(-1e-5)) / 2e-5
    val = st.killing_energy_derivative(h, c.y, c.eta_hat)
    assert abs(val) > 0.1
    assert val == pytest.approx(fd, rel=1e-7)


@pytest.mark.parametrize("degree,sign", [(2, 1.0), (1, -1.0), (3, -1.0)])
def test_energy_derivative_parity_at_antipode(degree, sign):
    # h = y1^d h0 has parity (-1)^d; nabla h flips it and the three tangent slots add (-1)^3
    w = st.polynomial_tensor(3, {(degree, 0, 0): 1.0, (0, degree, 0): 0.4}, [])
    h = st.SymTensorField(2, 3, lambda y: w.tensor(y)[..., None, None] * st.tangent_projector(y))
    rng = np.random.default_rng(8)
    for _ in range(5):
        c = circle(rng, 3)
        pos, tan = st.great_circle_point(c, np.pi)
        a = st.killing_energy_derivative(h, c.y, c.eta_hat)
        b = st.killing_energy_derivative(h, pos, tan)
        assert abs(a) > 1e-3
        assert b == pytest.approx(sign * a, abs=1e-10)


def test_homogeneous_quadratic_is_invariant():
    rng = np.random.default_rng(9)
    h = st.random_polynomial_tensor(3, 2, rng)
    y = random_sphere(rng, 3, 1)[0]
    eta = rng.normal(size=3)
    base = st.homogeneous_quadratic(h, y, eta)
    assert st.homogeneous_quadratic(h, y, eta + 0.7 * y) == pytest.approx(base, rel=1e-13)
    assert st.homogeneous_quadratic(h, 2.5 * y, eta / 2.5) == pytest.approx(base, rel=1e-13)
