"""Two-dimensional rigidity tools: Hopf's stable Riccati solution, Sturm
bounds, and a Gauss-Bonnet audit of the exhaustion B_j = {rho >= 1/j}.

For a unit-speed geodesic gamma with curvature K(t) = K(gamma(t)), the scalar
boundary problem  y'' + K y = 0,  y(0) = 1,  y(T) = 0  gives u_T = y'(0)/y(0);
as T grows u_T converges to the stable solution of  u' + u^2 + K = 0.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, interpolate

from . import flow, jacobi
from ._numerics import fit_power_law, gauss_legendre_panels, norm
from .metrics import Cone2D, Euclidean, MetricModel
from .volume import default_breaks

log = logging.getLogger(__name__)

DEFAULT_LADDER = (10.0, 30.0, 100.0, 300.0, 1000.0, 3000.0, 10000.0)


class ConjugatePointError(ValueError):
    """The boundary problem has a conjugate point inside its window."""


class LadderNonConvergence(RuntimeError):
    """The T-ladder of boundary problems is not Cauchy."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


# ---------------------------------------------------------------------------
# surfaces


class HyperbolicPatch(MetricModel):
    """Constant curvature -a^2 in geodesic polar form, written in Cartesian
    components: g = I + q(|x|^2) (|x|^2 I - x x^T), which is analytic at 0."""

    kind = "hyperbolic_patch"

    def __init__(self, a: float = 1.0):
        if a <= 0:
            raise ValueError("a must be positive")
        super().__init__(2, 0, {"a": float(a)})
        self.a = float(a)

    def _q(self, z):
        # q = a^2 (cosh(2 sqrt s) - 1 - 2 s) / (2 s^2), s = a^2 z
        s = self.a**2 * z
        sr = np.real(s)
        small = np.abs(sr) < 1e-2
        ss = np.where(small, 1.0, s)
        closed = (np.cosh(2 * np.sqrt(ss)) - 1 - 2 * ss) / (2 * ss * ss)
        series = 0.0 * s
        term_s = 1.0 + 0.0 * s
        fact = 24.0  # (2k)! for k = 2
        for k in range(2, 12):
            series = series + 4.0**k * term_s / (2 * fact)
            term_s = term_s * s
            fact *= (2 * k + 1) * (2 * k + 2)
        return self.a**2 * np.where(small, series, closed)

    def metric(self, x):
        x = np.asarray(x)
        z = np.sum(x * x, axis=-1)
        q = self._q(z)
        xx = x[..., :, None] * x[..., None, :]
        return np.eye(2) + q[..., None, None] * (z[..., None, None] * np.eye(2) - xx)


def hyperbolic_patch(a: float = 1.0) -> HyperbolicPatch:
    return HyperbolicPatch(a)


@dataclass(frozen=True)
class Surface2D:
    """A two-dimensional model with a Gaussian curvature evaluator."""

    model: MetricModel
    curvature: Optional[Callable] = None  # analytic K(x); default: from the Riemann tensor

    def __post_init__(self):
        if self.model.dim != 2:
            raise ValueError("Surface2D needs a two-dimensional model")

    def K(self, x):
        x = np.asarray(x, dtype=float)
        if self.curvature is not None:
            return np.asarray(self.curvature(x), dtype=float)
        return self.model.gaussian_curvature(x)

    def K_from_riemann(self, x):
        return self.model.gaussian_curvature(np.asarray(x, dtype=float))


def surface(model: MetricModel) -> Surface2D:
    """Wrap a 2D model, attaching the closed-form curvature when there is one."""
    if isinstance(model, Euclidean):
        return Surface2D(model, lambda x: np.zeros(np.shape(x)[:-1]))
    if isinstance(model, Cone2D):
        return Surface2D(model, lambda x: model.radial_curvature(norm(x)))
    if isinstance(model, HyperbolicPatch):
        return Surface2D(model, lambda x: np.full(np.shape(x)[:-1], -model.a**2))
    return Surface2D(model)


# ---------------------------------------------------------------------------
# curvature along a geodesic


@dataclass
class CurvatureTrace:
    """K sampled along a unit-speed geodesic on [0, t_max] (cubic spline)."""

    t: np.ndarray
    K: np.ndarray
    x: np.ndarray
    spline: Callable

    def __call__(self, t):
        return self.spline(t)


def _unit(model, x, v):
    v = np.asarray(v, dtype=float)
    return v / np.sqrt(v @ model.metric(np.asarray(x, float)) @ v)


def curvature_trace(surf: Surface2D, x, v, t_max: float, subdivide: int = 8, rtol=flow.RTOL, atol=flow.ATOL):
    model = surf.model
    x = np.asarray(x, dtype=float)
    v = _unit(model, x, v)
    if isinstance(model, Euclidean):
        t = np.linspace(0.0, t_max, 65)
        xs = x[None] + t[:, None] * v[None]
    else:
        traj = flow.integrate_cartesian(model, flow.CartesianState(x, v), (0.0, t_max), rtol=rtol, atol=atol)
        sol = traj.meta["sol"]
        base = sol.t
        frac = np.linspace(0.0, 1.0, subdivide + 1)[:-1]
        t = np.concatenate([(a + (b - a) * frac) for a, b in zip(base[:-1], base[1:])] + [base[-1:]])
        xs = sol.sol(t)[:2].T
    K = surf.K(xs)
    return CurvatureTrace(t, K, xs, interpolate.CubicSpline(t, K))


# ---------------------------------------------------------------------------
# Hopf limit


def _boundary_problem(K: Callable, t0: float, T: float, rtol=1e-12, atol=1e-14):
    """Backward solve of y'' = -K y from y(t0+T) = 0, y'(t0+T) = -1.  Returns
    (u = y'(t0)/y(t0), min of y over the sampled window before the end)."""

    def rhs(t, Y):
        return np.array([Y[1], -K(t) * Y[0]])

    sol = integrate.solve_ivp(rhs, (t0 + T, t0), np.array([0.0, -1.0]), method="DOP853", rtol=rtol, atol=atol)
    y0, dy0 = sol.y[:, -1]
    ys = sol.y[0, 1:]  # excludes the prescribed zero
    return float(dy0 / y0), float(ys.min()) if ys.size else float(y0)


@dataclass
class HopfResult:
    u: float
    ladder: np.ndarray
    values: np.ndarray
    increments: np.ndarray
    converged: bool
    monotone: bool  # u_T nondecreasing along the ladder
    sturm_bound: float  # sqrt(c) coth(sqrt(c) T), c = max(0, -min K) on the ray
    trace: CurvatureTrace = field(repr=False)


def hopf_u(surf: Surface2D, x, v, T_ladder: Sequence[float] = DEFAULT_LADDER, conv_tol: float = 1e-3,
           scan: bool = False, trace: Optional[CurvatureTrace] = None, extra: float = 0.0) -> HopfResult:
    """Stable Riccati value u(x, v) as the limit of the boundary-problem ladder.

    `scan=True` additionally runs the Jacobi conjugate-point scan on
    [0, max T]; conjugate points are always detected through the sign of the
    boundary solution.  `extra` extends the geodesic beyond max T (used when
    re-solving at flowed base points).
    """
    ladder = np.asarray(sorted(T_ladder), dtype=float)
    T_max = float(ladder[-1])
    if trace is None:
        trace = curvature_trace(surf, x, v, T_max + extra)
    if scan and not isinstance(surf.model, Euclidean):
        roots = jacobi.conjugate_scan(surf.model, np.asarray(x, float), _unit(surf.model, x, v), (0.0, T_max))
        if roots:
            raise ConjugatePointError(f"conjugate points at t = {roots[:3]}")
    vals = []
    for T in ladder:
        u, ymin = _boundary_problem(trace, 0.0, T)
        if ymin <= 0:
            raise ConjugatePointError(f"boundary solution vanishes inside [0, {T}]")
        vals.append(u)
    vals = np.array(vals)
    inc = np.abs(np.diff(vals))
    converged = bool(inc.size == 0 or (inc[-1] <= conv_tol and inc[-1] <= inc.max()))
    monotone = bool(np.all(np.diff(vals) >= -1e-12))
    c = max(0.0, -float(trace.K[trace.t <= T_max].min()))
    sturm = float(np.sqrt(c) / np.tanh(np.sqrt(c) * T_max)) if c > 0 else 1.0 / T_max
    res = HopfResult(float(vals[-1]), ladder, vals, inc, converged, monotone, sturm, trace)
    if not converged:
        raise LadderNonConvergence(f"T-ladder increments {inc}", res)
    return res


@dataclass
class RiccatiResidual:
    s: np.ndarray
    u: np.ndarray
    du: np.ndarray
    K: np.ndarray
    residual: np.ndarray

    @property
    def max(self) -> float:
        return float(np.max(np.abs(self.residual)))


def riccati_residual(surf: Surface2D, x, v, T: float = 1e4, s_points: Sequence[float] = (1.0, 2.0, 3.0),
                     h: float = 0.05, trace: Optional[CurvatureTrace] = None) -> RiccatiResidual:
    """|u' + u^2 + K| along the geodesic, with u re-solved at flowed base
    points (horizon T from each) and u' from a five-point stencil."""
    s_points = np.asarray(s_points, dtype=float)
    span = float(s_points.max()) + 2 * h
    if trace is None:
        trace = curvature_trace(surf, x, v, T + span)
    offsets = np.array([-2, -1, 0, 1, 2]) * h
    us, dus = [], []
    for s in s_points:
        vals = np.array([_boundary_problem(trace, s + o, T)[0] for o in offsets])
        us.append(vals[2])
        dus.append((vals[0] - 8 * vals[1] + 8 * vals[3] - vals[4]) / (12 * h))
    us, dus = np.array(us), np.array(dus)
    K = trace(s_points)
    return RiccatiResidual(s_points, us, dus, K, dus + us**2 + K)


# ---------------------------------------------------------------------------
# Gauss-Bonnet audit


@dataclass
class AuditRow:
    j: float
    area_curvature: float  # integral of K over B_j
    length: float  # length of the boundary circle
    boundary_curvature: float  # integral of k_j ds
    defect: float  # area_curvature + boundary_curvature - 2 pi
    max_boundary_K: float


def _radial_rule(surf, j, nodes):
    breaks = default_breaks(j, 1.0, tuple(surf.model.structure_radii) or (), per_structure=8)
    return gauss_legendre_panels(breaks, nodes)


def boundary_curve_terms(model, j: float, M: int = 512):
    """Length and integral of geodesic curvature for the circle |x| = j,
    traversed counterclockwise; k > 0 when the curve bends towards B_j."""
    th = 2 * np.pi * np.arange(M) / M
    c = j * np.stack([np.cos(th), np.sin(th)], -1)
    dc = j * np.stack([-np.sin(th), np.cos(th)], -1)
    G = model.christoffel(c)
    acc = -c + np.einsum("...kij,...i,...j->...k", G, dc, dc)
    g = model.metric(c)
    speed2 = np.einsum("...i,...ij,...j->...", dc, g, dc)
    area = np.sqrt(np.linalg.det(g))
    # g(acc, J dc) with J the rotation by +pi/2 in g: sqrt(det g) (acc_2 dc_1 - acc_1 dc_2)
    kds = area * (acc[:, 1] * dc[:, 0] - acc[:, 0] * dc[:, 1]) / speed2
    dth = 2 * np.pi / M
    return float(np.sum(np.sqrt(speed2)) * dth), float(np.sum(kds) * dth), c


def gauss_bonnet_audit(surf: Surface2D, j_ladder: Sequence[float], radial_nodes: int = 16, angular_nodes: int = 128,
                       boundary_nodes: int = 512):
    """Rows (j, int K dA, length, int k ds, defect) for B_j = {|x| <= j}."""
    rows = []
    model = surf.model
    phi = 2 * np.pi * np.arange(angular_nodes) / angular_nodes
    dirs = np.stack([np.cos(phi), np.sin(phi)], -1)
    for j in j_ladder:
        j = float(j)
        if j < 1.0:
            raise ValueError("B_j = {rho >= 1/j} needs j >= 1")
        r, w = _radial_rule(surf, j, radial_nodes)
        pts = r[:, None, None] * dirs[None]
        dA = np.sqrt(np.linalg.det(model.metric(pts))) * (w * r)[:, None] * (2 * np.pi / angular_nodes)
        area_K = float(np.sum(surf.K(pts) * dA))
        length, kint, circle = boundary_curve_terms(model, j, boundary_nodes)
        maxK = float(np.max(np.abs(surf.K(circle))))
        rows.append(AuditRow(j, area_K, length, kint, area_K + kint - 2 * np.pi, maxK))
    return rows


# ---------------------------------------------------------------------------
# hypotheses checklist


@dataclass
class ChecklistReport:
    j: np.ndarray
    convexity_margin: np.ndarray  # min over probes of (|x|^2 - j^2)/j^2 after launch
    convex: bool
    decay_values: np.ndarray  # j^2 max_{dB_j} |K|
    decay_exponent: float
    decay_ok: bool
    length_ratio: np.ndarray  # l_j / j
    boundary_curvature: np.ndarray
    length_ok: bool
    curvature_limit_ok: bool
    audit: list = field(repr=False, default_factory=list)

    @property
    def hypotheses(self) -> dict:
        return {"i": self.convex, "ii": self.decay_ok, "iii": self.length_ok and self.curvature_limit_ok}

    @property
    def passed(self) -> bool:
        return all(self.hypotheses.values())


def convexity_probe(surf: Surface2D, j: float, samples: int = 64, horizon: Optional[float] = None, n_t: int = 2001):
    """Launch geodesics tangent to |x| = j and return min (|x(t)|^2 - j^2)/j^2
    over t in [0, horizon]; a negative value means re-entry into B_j."""
    model = surf.model
    horizon = 10.0 * j if horizon is None else horizon
    th = 2 * np.pi * np.arange(samples) / samples
    worst = np.inf
    for a in th:
        x0 = j * np.array([np.cos(a), np.sin(a)])
        v0 = _unit(model, x0, np.array([-np.sin(a), np.cos(a)]))
        if isinstance(model, Euclidean):
            t = np.linspace(0, horizon, n_t)
            xs = x0[None] + t[:, None] * v0[None]
        else:
            traj = flow.integrate_cartesian(model, flow.CartesianState(x0, v0), (0.0, horizon))
            sol = traj.meta["sol"]
            t = np.unique(np.concatenate([sol.t, np.linspace(0, horizon, n_t)]))
            xs = sol.sol(t)[:2].T
        worst = min(worst, float(np.min(np.sum(xs * xs, -1) - j * j)) / j**2)
    return worst


def rigidity_checklist(surf: Surface2D, j_max: float = 64.0, j_ladder: Optional[Sequence[float]] = None,
                       samples: int = 64, horizon_factor: float = 10.0, convex_tol: float = 1e-9,
                       curvature_tol: float = 1e-3) -> ChecklistReport:
    """Measure hypotheses (i)-(iii) on the exhaustion B_j.

    (i)   boundary-tangent geodesics do not re-enter B_j within 10 j;
    (ii)  j^2 max_{dB_j} |K| decays;
    (iii) l_j / j stays bounded and the boundary curvature integral tends to 2 pi.
    """
    if j_ladder is None:
        j_ladder = [2.0**k for k in range(2, int(np.log2(j_max)) + 1)]
    js = np.asarray(j_ladder, dtype=float)
    audit = gauss_bonnet_audit(surf, js)
    margins = np.array([convexity_probe(surf, j, samples, horizon_factor * j) for j in js])
    convex = bool(np.all(margins >= -convex_tol))
    decay = np.array([r.j**2 * r.max_boundary_K for r in audit])
    if np.all(decay <= 1e-12):
        p, decay_ok = -np.inf, True
    else:
        p = fit_power_law(js, np.maximum(decay, 1e-300))[0]
        decay_ok = bool(p < 0 and decay[-1] < decay[0])
    ratio = np.array([r.length / r.j for r in audit])
    length_ok = bool(fit_power_law(js, ratio)[0] <= 0.1)
    kint = np.array([r.boundary_curvature for r in audit])
    err = np.abs(kint - 2 * np.pi)
    curvature_limit_ok = bool(err[-1] <= curvature_tol and err[-1] <= err[0] + 1e-12)
    return ChecklistReport(js, margins, convex, decay, float(p), decay_ok, ratio, kint, length_ok,
                           curvature_limit_ok, audit)
