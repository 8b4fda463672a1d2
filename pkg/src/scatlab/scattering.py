"""Scattering map, its Euclidean comparison and the large-|eta| expansion.

Slow variables.  For incoming data (y0, eta0/eps) with |eta0| = 1 the rescaled
flow, read in s = tau/eps with rho~ = rho/eps and eta~ = eps*eta, is the flow of

    X_eps = xi~ d_rho~ - rho~ (|eta~|^2_{h} + (eps rho~/2) h'(eta~, eta~)) d_xi~ + H_{eps rho~}

which for a normal-form model equals X_0 + eps^m X_m exactly in the exterior
region.  States are stored as (rho~, xi~, y~ in R^n, eta~ in R^n); the sphere
variables use the homogeneous extension of the Hamiltonians, for which
|y~| = 1 and y~ . eta~ = 0 are invariant.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate

from . import flow
from ._numerics import CSTEP, fit_power_law, gauss_legendre_panels
from .sphere_tensors import (GreatCircle, SymTensorField, great_circle_point, homogeneous_quadratic,
                             sym_derivative, weighted_xray)


# ---------------------------------------------------------------------------
# scattering map


@dataclass
class ScatteringSample:
    incoming: flow.BoundaryData
    outgoing: flow.BoundaryData
    tau_plus: float
    deviation: float
    extension_dependent: bool = False


def euclidean_deviation(bd_in: flow.BoundaryData, bd_out: flow.BoundaryData) -> float:
    """Sup-norm distance of (y+, eta+) from the antipodal prediction (-y, -eta)."""
    pred = flow.antipodal_prediction(bd_in)
    return float(max(np.max(np.abs(bd_out.y - pred.y)), np.max(np.abs(bd_out.eta - pred.eta))))


def scattering_map(model, bd: flow.BoundaryData, rtol=flow.RTOL, atol=flow.ATOL) -> ScatteringSample:
    traj, out, tau_plus = flow.shoot_from_boundary(model, bd, rtol=rtol, atol=atol)
    crossed = any(seg.chart == "cartesian" for seg in traj.segments)
    return ScatteringSample(bd, out, float(tau_plus), euclidean_deviation(bd, out), crossed)


def scattering_grid(model, dirs, eta_norms, rng=None):
    """Incoming data on a product of directions y and |eta| values; the
    tangent direction of eta is drawn at random (seeded)."""
    rng = np.random.default_rng(0) if rng is None else rng
    out = []
    for y in dirs:
        y = np.asarray(y, float) / np.linalg.norm(y)
        for e in eta_norms:
            v = rng.normal(size=y.size)
            v -= (v @ y) * y
            out.append(flow.BoundaryData(y, e * v / np.linalg.norm(v), "-"))
    return out


# ---------------------------------------------------------------------------
# cones


def cone_angular_advance(model, impact: float, start_radius: float = 60.0, rtol=flow.RTOL, atol=flow.ATOL):
    """Total polar-angle advance of the cone geodesic with impact parameter b.

    The geodesic is integrated between two crossings of the circle of flat-cone
    radius S = start_radius; the exterior tails of the exact flat cone add
    2 arcsin(b/S)/slope in closed form.  For geodesics that stay outside the
    smoothed tip the result is pi/slope.
    """
    c = model.slope
    S = float(start_radius)
    r = S - model.offset / c  # coordinate radius of the flat-cone radius S
    b = float(impact)
    x = np.array([r, 0.0])
    rdot = -np.sqrt(max(1.0 - (b / S) ** 2, 0.0))
    thdot = b / (c * S * S)
    v = np.array([rdot, r * thdot])

    def back_out(t, Y):
        return np.linalg.norm(Y[:2]) - r

    back_out.terminal, back_out.direction = True, 1.0
    tr = flow.integrate_cartesian(model, flow.CartesianState(x, v), (0.0, 4.0 * S + 100.0), rtol=rtol, atol=atol,
                                  events=[back_out])
    sol = tr.meta["sol"]
    ts = np.linspace(sol.t[0], sol.t[-1], 4001)
    X = sol.sol(ts)[:2]
    theta = np.unwrap(np.arctan2(X[1], X[0]))
    return float(theta[-1] - theta[0] + 2.0 * np.arcsin(min(abs(b) / S, 1.0)) / c * np.sign(b if b else 1.0))


# ---------------------------------------------------------------------------
# slow field and the linearized expansion


def _quad_hamiltonian(h: SymTensorField):
    def F(y, eta):
        return homogeneous_quadratic(h, y, eta)

    return F


def _grad_yeta(F, y, eta):
    """(F, dF/dy, dF/deta) by the complex step."""
    n = y.shape[-1]
    out_y, out_e = [], []
    for k in range(n):
        yc = y.astype(complex)
        yc[..., k] += 1j * CSTEP
        out_y.append(np.imag(F(yc, eta.astype(complex))) / CSTEP)
        ec = eta.astype(complex)
        ec[..., k] += 1j * CSTEP
        out_e.append(np.imag(F(y.astype(complex), ec)) / CSTEP)
    return np.real(F(y, eta)), np.stack(out_y, -1), np.stack(out_e, -1)


def _sphere_part(y, eta):
    yy = np.sum(y * y, -1)[..., None]
    ye = np.sum(y * eta, -1)[..., None]
    ee = np.sum(eta * eta, -1)[..., None]
    F0 = 0.5 * (yy * ee - ye * ye)[..., 0]
    return F0, ee * y - ye * eta, yy * eta - ye * y  # F0, dF0/dy, dF0/deta


def split(Z, n):
    Z = np.asarray(Z)
    return Z[..., 0], Z[..., 1], Z[..., 2 : 2 + n], Z[..., 2 + n : 2 + 2 * n]


def slow_field_zero(Z, n):
    """X_0 = xi d_rho - rho |eta|^2 d_xi + H_0 on arrays (..., 2+2n)."""
    rho, xi, y, eta = split(Z, n)
    F0, dy, de = _sphere_part(y, eta)
    return np.concatenate([xi[..., None], (-rho * 2 * F0)[..., None], de, -dy], axis=-1)


def slow_perturbation(h: SymTensorField, m: int, Z):
    """X_m = -(m/2+1) rho^{m+1} h(eta, eta) d_xi + rho^m H_m."""
    n = h.dim
    rho, xi, y, eta = split(Z, n)
    Fm, dy, de = _grad_yeta(_quad_hamiltonian(h), np.asarray(y), np.asarray(eta))
    rm = rho**m
    return np.concatenate([0.0 * rho[..., None], (-(m / 2 + 1) * rho * rm * 2 * Fm)[..., None],
                           rm[..., None] * de, -rm[..., None] * dy], axis=-1)


def slow_field(model, Z, eps: float):
    """X_eps for a normal-form model (exterior region, where the taper is 1)."""
    if model.kind == "euclidean":
        return slow_field_zero(Z, model.dim)
    if model.kind != "normal_form_ae":
        raise ValueError("slow field needs a normal-form model")
    h = _scaled_field(model)
    return slow_field_zero(Z, model.dim) + eps**model.m_chart * slow_perturbation(h, model.m_chart, Z)


def _scaled_field(model) -> SymTensorField:
    a = model.amplitude
    base = model.spec.h_m
    return SymTensorField(2, base.dim, lambda y: a * base.tensor(y), complex_safe=base.complex_safe,
                          name=f"{a}*{base.name}")


def perturbation_field(model) -> SymTensorField:
    """The leading dual-metric perturbation h_m of a normal-form model (amplitude included)."""
    return _scaled_field(model)


def circle_solution(circle: GreatCircle, s):
    """c_0(s) = (sin s, cos s, e^{s H_0}(y, eta_hat))."""
    s = np.asarray(s, dtype=float)
    pos, tan = great_circle_point(circle, s)
    return np.concatenate([np.sin(s)[..., None], np.cos(s)[..., None], pos, tan], axis=-1)


def _jacobian(fun, Z):
    d = Z.size
    J = np.empty((d, d))
    for k in range(d):
        Zc = Z.astype(complex)
        Zc[k] += 1j * CSTEP
        J[:, k] = np.imag(fun(Zc)) / CSTEP
    return J


@dataclass
class LinearizedSolution:
    circle: GreatCircle
    m: int
    s: np.ndarray
    c0: np.ndarray
    R: np.ndarray  # fundamental matrices on the grid
    c_m: np.ndarray  # from the variational ODE
    c_m_integral: np.ndarray  # from R(s) int_0^s R^{-1} X_m
    rho_m_pi: float
    mismatch: np.ndarray  # c_m(pi) + rho_m(pi) X_0(c_0(pi))
    diagnostics: dict = field(default_factory=dict)

    @property
    def tau_m(self):
        return self.rho_m_pi

    def components(self, vec=None):
        """Split a (2+2n) vector into named parts (default: the mismatch)."""
        vec = self.mismatch if vec is None else vec
        n = self.circle.y.size
        rho, xi, y, eta = split(vec, n)
        return {"rho": float(rho), "xi": float(xi), "y": np.asarray(y), "eta": np.asarray(eta)}

    def liouville_component(self):
        """lambda(mismatch) = eta(pi) . delta y at c_0(pi)."""
        n = self.circle.y.size
        eta_pi = split(self.c0[-1], n)[3]
        return float(eta_pi @ self.components()["y"])

    def energy_component(self):
        """dE(mismatch) with E = |y|^2|eta|^2 - (y.eta)^2 at c_0(pi)."""
        n = self.circle.y.size
        _, dy, de = _sphere_part(*split(self.c0[-1], n)[2:])
        c = self.components()
        return float(2 * (dy @ c["y"] + de @ c["eta"]))


def linearized_scattering(h_m: SymTensorField, m: int, circle: GreatCircle, npts: int = 257,
                          rtol=1e-12, atol=1e-14) -> LinearizedSolution:
    """First-order (in eps^m) correction along c_0 on s in [0, pi]."""
    n = h_m.dim
    d = 2 + 2 * n
    f0 = lambda Z: slow_field_zero(Z, n)

    def rhs(s, W):
        c0 = circle_solution(circle, s)
        J = _jacobian(f0, c0)
        R = W[: d * d].reshape(d, d)
        cm = W[d * d :]
        Xm = slow_perturbation(h_m, m, c0)
        return np.concatenate([(J @ R).ravel(), J @ cm + Xm])

    W0 = np.concatenate([np.eye(d).ravel(), np.zeros(d)])
    sol = integrate.solve_ivp(rhs, (0.0, np.pi), W0, method="DOP853", rtol=rtol, atol=atol, dense_output=True)
    s = np.linspace(0.0, np.pi, npts)
    W = sol.sol(s).T
    R = W[:, : d * d].reshape(-1, d, d)
    cm = W[:, d * d :]
    c0 = circle_solution(circle, s)
    # integral route: composite Gauss-Legendre on each grid interval, accumulated
    xg, wg = gauss_legendre_panels(s, 8)
    Rg = sol.sol(xg).T[:, : d * d].reshape(-1, d, d)
    integrand = np.linalg.solve(Rg, slow_perturbation(h_m, m, circle_solution(circle, xg))[..., None])[..., 0]
    panels = (wg[:, None] * integrand).reshape(npts - 1, 8, d).sum(axis=1)
    cum = np.vstack([np.zeros(d), np.cumsum(panels, axis=0)])
    cm_int = np.einsum("sij,sj->si", R, cum)
    rho_m_pi = float(cm[-1, 0])
    mismatch = cm[-1] + rho_m_pi * slow_field_zero(c0[-1], n)
    rot = np.array([[np.cos(s), np.sin(s)], [-np.sin(s), np.cos(s)]]).transpose(2, 0, 1)
    diag = {
        "rotation_block_error": float(np.max(np.abs(R[:, :2, :2] - rot))),
        "route_difference": float(np.max(np.abs(cm - cm_int))),
    }
    return LinearizedSolution(circle, m, s, c0, R, cm, cm_int, rho_m_pi, mismatch, diag)


# ---------------------------------------------------------------------------
# finite-difference scattering derivative


@dataclass
class ScatteringDerivative:
    eps: np.ndarray
    deviations: np.ndarray  # rows: (dy, eps * d eta) at each eps, flattened
    tau_shift: np.ndarray  # tau_plus/eps - pi
    order: float
    orders: np.ndarray
    coefficient: np.ndarray  # Richardson-extrapolated eps^{-m} deviation
    tau_coefficient: float
    predicted: Optional[np.ndarray] = None
    predicted_tau: Optional[float] = None
    relative_error: Optional[float] = None
    flagged: bool = False


def scattering_derivative_fd(model, y0, eta0_hat, m: Optional[int] = None, eps=(1 / 8, 1 / 16, 1 / 32),
                             predict: bool = True) -> ScatteringDerivative:
    """Leading eps^m coefficient of S_g(y0, eta0/eps) - S_{g0}(y0, eta0/eps).

    Deviations are taken in slow units: (y+ - (-y0), eps (eta+ + eta0/eps)).
    The coefficient is extrapolated assuming the next term is one order higher.
    """
    m = model.decay_order if m is None else m
    circle = GreatCircle.from_vectors(y0, eta0_hat)
    y0, e0 = circle.y, circle.eta_hat
    eps = np.asarray(sorted(eps, reverse=True), dtype=float)
    devs, taus = [], []
    for e in eps:
        bd = flow.BoundaryData(y0, e0 / e, "-")
        _, out, tau_plus = flow.shoot_from_boundary(model, bd)
        devs.append(np.concatenate([out.y + y0, e * out.eta + e0]))
        taus.append(tau_plus / e - np.pi)
    devs, taus = np.array(devs), np.array(taus)
    norms = np.linalg.norm(devs, axis=1)
    orders = np.log(norms[:-1] / norms[1:]) / np.log(eps[:-1] / eps[1:])
    order = fit_power_law(eps, norms)[0] if np.all(norms > 0) else np.inf
    coef = devs / eps[:, None] ** m
    tcoef = taus / eps**m
    r = eps[-2] / eps[-1]
    coefficient = (r * coef[-1] - coef[-2]) / (r - 1)
    tau_coefficient = float((r * tcoef[-1] - tcoef[-2]) / (r - 1))
    res = ScatteringDerivative(eps, devs, taus, float(order), orders, coefficient, tau_coefficient)
    res.flagged = not (m - 0.5 <= order <= m + 0.5)
    if predict and model.kind == "normal_form_ae":
        lin = linearized_scattering(perturbation_field(model), m, circle)
        c = lin.components()
        res.predicted = np.concatenate([c["y"], c["eta"]])
        res.predicted_tau = lin.tau_m
        res.relative_error = float(np.linalg.norm(coefficient - res.predicted) / np.linalg.norm(res.predicted))
    return res


# ---------------------------------------------------------------------------
# moment identities


def _circle_values(f, circle, s, rank):
    pos, tan = great_circle_point(circle, s)
    return f(pos, *([tan] * rank))


def killing_energy_along(h: SymTensorField, circle: GreatCircle, s):
    """(H_0 h)(e^{s H_0}(y, eta_hat)) = (1/3) Dh(gamma'; gamma', gamma', gamma')."""
    return _circle_values(sym_derivative(h), circle, s, 3) / 3.0


def sine_moment(m: int) -> float:
    """int_0^pi sin^m, by the recursion I_m = (m-1)/m I_{m-2}."""
    val = np.pi if m % 2 == 0 else 2.0
    for k in range(2 + (m % 2), m + 1, 2):
        val *= (k - 1) / k
    return val


def moment_identities(h_m: SymTensorField, m: int, circle: GreatCircle, degree: Optional[int] = None,
                      rng=None, N: int = 2048) -> dict:
    """Diagnostic values of the moment conditions a scattering-trivial h_m would satisfy."""
    degree = (3 if m % 2 else 4) if degree is None else degree
    Dh = sym_derivative(h_m)
    third = lambda j, k, rng_="half": weighted_xray(Dh, circle, j, k, rng_, N) / 3.0
    half = lambda j, k: weighted_xray(h_m, circle, j, k, "half", N)
    y_pi = GreatCircle(-circle.y, -circle.eta_hat)
    H0_here = float(killing_energy_along(h_m, circle, 0.0))
    H0_there = float(killing_energy_along(h_m, y_pi, 0.0))
    out = {
        "energy_variation": third(m, 0),
        "cosine_moment": half(m + 1, 1),
        "direction_combination": half(m, 0) - (m / 2 + 1) * half(m + 2, 0),
        "travel_time_prediction": -(m / 2 + 1) * half(m + 2, 0),
        "parity": H0_there - (-1) ** m * H0_here,
        "mixed_moments_half": [third(j, degree - j) for j in range(degree + 1)],
        "mixed_moments_full": [third(j, degree - j, "full") for j in range(degree + 1)],
        "sine_ratio": sine_moment(m + 2) / sine_moment(m),
    }
    # integration by parts: int sin^m (H_0^2 h) = -m int cos sin^{m-1} (H_0 h);
    # H_0^2 h obtained by spectral differentiation of H_0 h along the circle
    s = 2 * np.pi * np.arange(N) / N
    f = killing_energy_along(h_m, circle, s)
    k = np.fft.fftfreq(N, d=1.0 / N)
    fp = np.real(np.fft.ifft(1j * k * np.fft.fft(f)))
    w = np.full(N // 2 + 1, 2 * np.pi / N)
    w[[0, -1]] *= 0.5
    sh = s[: N // 2 + 1]
    lhs = np.sum(w * np.sin(sh) ** m * fp[: N // 2 + 1])
    rhs = -m * np.sum(w * np.cos(sh) * np.sin(sh) ** (m - 1) * f[: N // 2 + 1])
    out["ibp_residual"] = float(lhs - rhs)
    if rng is not None:
        # random homogeneous polynomial of the given degree, integrated over the full circle
        n = h_m.dim
        coeffs = rng.normal(size=(n,) * degree)
        pos, _ = great_circle_point(circle, s)
        p = np.einsum(coeffs, list(range(degree)), *sum(([pos, [degree, i]] for i in range(degree)), []), [degree])
        out["polynomial_moment"] = float(np.sum(2 * np.pi / N * p * f))
    return out
