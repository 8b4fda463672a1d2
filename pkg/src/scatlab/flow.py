"""Geodesic flow: Cartesian integration, the rescaled flow in the compactified
chart (rho, y, xi0, eta), boundary shooting and time reparametrizations.

Compact coordinates (valid where rho = 1/|x|, i.e. |x| >= 1) write a covector
as xi = xi0 d(rho)/rho^2 + eta.dy with y = x/|x| on the unit sphere and eta an
embedded sphere covector (eta . y = 0).  With k_rho the dual sphere metric and
F = k_rho(eta, eta)/2 = F0 + a rho^m F_m, the rescaled field reads

    rho' = xi0,   xi0' = -rho (2F + m a rho^m F_m),
    y'   = dF/d eta,   eta' = -dF/dy,

and it is smooth up to rho = 0.  Geodesics enter with xi0 = +1 and leave
with xi0 = -1.  The Euclidean line x0 + t v (x0 . v = 0) has incoming data
(-v, x0) and outgoing data (v, -x0).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate, optimize

from ._numerics import CSTEP, norm, rho_profile

log = logging.getLogger(__name__)

RTOL = 1e-10
ATOL = 1e-12
RHO_SWITCH = 0.1  # handoff between compact and Cartesian charts


class IntegrationError(RuntimeError):
    """Integrator failure, budget exhaustion or chart exit."""


# ---------------------------------------------------------------------------
# state types


@dataclass(frozen=True)
class CartesianState:
    x: np.ndarray
    v: np.ndarray


@dataclass(frozen=True)
class CompactState:
    rho: float
    y: np.ndarray
    xi0: float
    eta: np.ndarray

    def as_array(self):
        return np.concatenate([[self.rho], self.y, [self.xi0], self.eta])

    @classmethod
    def from_array(cls, Z):
        n = (len(Z) - 2) // 2
        return cls(float(Z[0]), np.array(Z[1 : n + 1]), float(Z[n + 1]), np.array(Z[n + 2 : 2 * n + 2]))


@dataclass(frozen=True)
class BoundaryData:
    y: np.ndarray
    eta: np.ndarray
    side: str = "-"

    def __post_init__(self):
        if self.side not in ("-", "+"):
            raise ValueError("side must be '-' or '+'")


def euclidean_line_data(x0, v):
    """Incoming and outgoing boundary data of the line x0 + t v."""
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v)
    x0 = np.asarray(x0, dtype=float)
    perp = x0 - (x0 @ v) * v
    return BoundaryData(-v, perp.copy(), "-"), BoundaryData(v.copy(), -perp, "+")


def antipodal_prediction(bd: BoundaryData) -> BoundaryData:
    """Euclidean scattering: (y, eta) -> (-y, -eta) in embedded components."""
    return BoundaryData(-np.asarray(bd.y), -np.asarray(bd.eta), "+")


def line_from_incoming(bd: BoundaryData):
    """(x0, v) of the Euclidean line with the given incoming data, foot at t=0."""
    return np.asarray(bd.eta, dtype=float).copy(), -np.asarray(bd.y, dtype=float)


# ---------------------------------------------------------------------------
# chart conversions


def cartesian_to_compact(model, x, v) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x)
    y = x / r
    xi = model.metric(x) @ v
    xi0 = -(y @ xi)
    eta = r * (xi - (y @ xi) * y)
    return np.concatenate([[1.0 / r], y, [xi0], eta])


def compact_to_cartesian(model, Z):
    n = model.dim
    rho, y, xi0, eta = Z[0], Z[1 : n + 1], Z[n + 1], Z[n + 2 : 2 * n + 2]
    y = y / np.linalg.norm(y)
    x = y / rho
    xi = -xi0 * y + rho * (eta - (eta @ y) * y)
    v = np.linalg.solve(model.metric(x), xi)
    return x, v


def project_compact(model, Z):
    """Restore |y| = 1, eta . y = 0 and the energy constraint on a sample."""
    n = model.dim
    Z = np.array(Z, dtype=float)
    y = Z[1 : n + 1] / np.linalg.norm(Z[1 : n + 1])
    eta = Z[n + 2 : 2 * n + 2]
    eta = eta - (eta @ y) * y
    rho, xi0 = Z[0], Z[n + 1]
    # rho^2 k(eta, eta) is quadratic in eta, so a single rescale restores energy
    rq = rho * rho * 2 * _hamiltonian(model, rho, y, eta)
    if rq > 1e-6:
        eta = eta * np.sqrt(max(1.0 - xi0 * xi0, 0.0) / rq)
    else:
        xi0 = np.copysign(np.sqrt(max(1.0 - rq, 0.0)), xi0 if xi0 != 0 else 1.0)
    Z[0], Z[1 : n + 1], Z[n + 1], Z[n + 2 : 2 * n + 2] = rho, y, xi0, eta
    return Z


# ---------------------------------------------------------------------------
# the rescaled vector field


def _sphere_terms(y, eta):
    yy = np.sum(y * y, axis=-1)[..., None]
    ye = np.sum(y * eta, axis=-1)[..., None]
    ee = np.sum(eta * eta, axis=-1)[..., None]
    F0 = 0.5 * (yy * ee - ye * ye)[..., 0]
    return F0, yy * eta - ye * y, ee * y - ye * eta


def _perturbation_terms(model, y, eta):
    """F_m and its gradients in y and eta by the complex step (batched)."""
    n = y.shape[-1]
    base = model.sphere_perturbation(y, eta)
    Yc = np.repeat(y[None].astype(complex), 2 * n, axis=0)
    Ec = np.repeat(eta[None].astype(complex), 2 * n, axis=0)
    for k in range(n):
        Yc[k, ..., k] += 1j * CSTEP
        Ec[n + k, ..., k] += 1j * CSTEP
    vals = np.imag(model.sphere_perturbation(Yc, Ec)) / CSTEP
    dy = np.moveaxis(vals[:n], 0, -1)
    de = np.moveaxis(vals[n:], 0, -1)
    return np.real(base), dy, de


def _hamiltonian(model, rho, y, eta):
    F0, _, _ = _sphere_terms(np.asarray(y), np.asarray(eta))
    if model.amplitude == 0.0:
        return F0
    return F0 + model.amplitude * rho**model.m_chart * np.real(model.sphere_perturbation(y, eta))


def compact_field(model, Z, clock=False):
    """Rescaled field on arrays Z[..., :2n+2]; with clock=True one extra
    component integrates (2F + m a rho^m F_m) / xi0^2 (aligned-time clock)."""
    n = model.dim
    Z = np.asarray(Z, dtype=float)
    rho = Z[..., 0]
    y = Z[..., 1 : n + 1]
    xi0 = Z[..., n + 1]
    eta = Z[..., n + 2 : 2 * n + 2]
    F0, dF0e, dF0y = _sphere_terms(y, eta)
    a, m = model.amplitude, model.m_chart
    if a:
        Fm, dFmy, dFme = _perturbation_terms(model, y, eta)
        coef = a * rho**m
        dy = dF0e + coef[..., None] * dFme
        deta = -(dF0y + coef[..., None] * dFmy)
        extra = m * coef * Fm
        q = 2 * F0 + 2 * coef * Fm
    else:
        dy, deta, extra, q = dF0e, -dF0y, 0.0, 2 * F0
    dxi = -rho * (q + extra)
    parts = [xi0[..., None], dy, dxi[..., None], deta]
    if clock:
        parts.append(((q + extra) / np.maximum(xi0 * xi0, 0.25))[..., None])
    return np.concatenate(parts, axis=-1)


def rescaled_vector_field(model, state: CompactState) -> CompactState:
    """Derivative of (rho, y, xi0, eta) along the rescaled flow."""
    if not model.has_compact_chart:
        raise ValueError("model has no compact normal-form chart")
    d = compact_field(model, state.as_array())
    return CompactState.from_array(d)


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class Segment:
    chart: str  # "compact" or "cartesian"
    start: float  # independent variable (tau for compact, t for cartesian)
    end: float
    dense: object  # callable s -> state array
    t_anchor: Optional[tuple] = None  # (tau, t) pair known on compact segments
    clock: bool = False


@dataclass
class Trajectory:
    """Piecewise dense trajectory through both charts.

    Compact segments are parametrized by tau, Cartesian ones by t with tau
    carried as the last state component.  `param` selects the clock used by
    :meth:`sample`.
    """

    model: object
    segments: list
    param: str = "tau"
    events: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    # -- clocks --------------------------------------------------------
    def tau_range(self):
        lo = self._tau_of_seg(self.segments[0], self.segments[0].start)
        hi = self._tau_of_seg(self.segments[-1], self.segments[-1].end)
        return lo, hi

    def _tau_of_seg(self, seg, s):
        if seg.chart == "compact":
            return s
        return float(seg.dense(s)[-1])

    def _find_segment_tau(self, tau):
        for seg in self.segments:
            a, b = self._tau_of_seg(seg, seg.start), self._tau_of_seg(seg, seg.end)
            if a - 1e-14 <= tau <= b + 1e-14:
                return seg
        raise ValueError(f"tau={tau} outside trajectory")

    def t_of_tau(self, tau):
        seg = self._find_segment_tau(tau)
        if seg.chart == "cartesian":
            return optimize.brentq(lambda t: seg.dense(t)[-1] - tau, seg.start, seg.end, xtol=1e-15, rtol=1e-15)
        n = self.model.dim
        if seg.clock:
            Z = seg.dense(tau)
            if Z[n + 1] >= 0.5:
                return -1.0 / (Z[n + 1] * Z[0]) + Z[-1]
        nodes, cum = self._cumulative(seg)
        k = max(int(np.searchsorted(nodes, tau, side="right")) - 1, 0)
        return cum[k] + _gl_integral(lambda s: seg.dense(s)[0] ** -2, nodes[k], tau)

    def _cumulative(self, seg):
        # t at the solver nodes of a compact segment, from its anchor
        cache = getattr(seg, "_cum", None)
        if cache is not None:
            return cache
        ta, t0 = seg.t_anchor
        ts = np.asarray(getattr(seg.dense, "ts", [seg.start, seg.end]), dtype=float)
        ts = ts[(ts >= ta) & (ts < seg.end)]
        nodes = np.concatenate([[ta], ts[ts > ta]])
        cum = [t0]
        for a, b in zip(nodes[:-1], nodes[1:]):
            cum.append(cum[-1] + _gl_integral(lambda s: seg.dense(s)[0] ** -2, a, b))
        seg._cum = (nodes, np.array(cum))
        return seg._cum

    def tau_of_t(self, t):
        for seg in self.segments:
            if seg.chart == "cartesian" and seg.start - 1e-14 <= t <= seg.end + 1e-14:
                return float(seg.dense(t)[-1])
        for seg in self.segments:
            if seg.chart != "compact":
                continue
            lo, hi = seg.start, seg.end
            width = hi - lo
            lo_in = lo + 1e-12 * max(1.0, width) if lo == 0.0 else lo
            if self.t_of_tau(lo_in) > t:
                continue
            # approach the segment end until the bracket closes (t -> inf at exit)
            for k in range(1, 13):
                hi_in = hi - width * 10.0 ** (-k)
                if self.t_of_tau(hi_in) >= t:
                    return optimize.brentq(lambda s: self.t_of_tau(s) - t, lo_in, hi_in, xtol=1e-15, rtol=1e-15)
        raise ValueError(f"t={t} outside the reachable range")

    # -- states --------------------------------------------------------
    def compact_state(self, tau):
        seg = self._find_segment_tau(tau)
        n = self.model.dim
        if seg.chart == "compact":
            return seg.dense(tau)[: 2 * n + 2]
        t = self.t_of_tau(tau)
        Y = seg.dense(t)
        return cartesian_to_compact(self.model, Y[:n], Y[n : 2 * n])

    def cartesian_state(self, t):
        n = self.model.dim
        for seg in self.segments:
            if seg.chart == "cartesian" and seg.start - 1e-14 <= t <= seg.end + 1e-14:
                Y = seg.dense(t)
                return Y[:n], Y[n : 2 * n]
        return compact_to_cartesian(self.model, self.compact_state(self.tau_of_t(t)))

    def sample(self, per_segment: int = 50):
        """Rows (clock value, chart tag, state...) for export."""
        rows = []
        for seg in self.segments:
            s = np.linspace(seg.start, seg.end, per_segment)
            for si in s:
                rows.append((float(si), seg.chart, np.asarray(seg.dense(si), dtype=float)))
        return rows


_GLX, _GLW = np.polynomial.legendre.leggauss(16)


def _gl_integral(f, a, b, depth=0):
    """Adaptive (bisection) Gauss-Legendre quadrature of a scalar function."""
    if b == a:
        return 0.0
    x = 0.5 * (b - a) * _GLX + 0.5 * (a + b)
    whole = 0.5 * (b - a) * sum(w * f(xi) for w, xi in zip(_GLW, x))
    if depth >= 30:
        return whole
    m = 0.5 * (a + b)
    xl = 0.5 * (m - a) * _GLX + 0.5 * (a + m)
    xr = 0.5 * (b - m) * _GLX + 0.5 * (m + b)
    left = 0.5 * (m - a) * sum(w * f(xi) for w, xi in zip(_GLW, xl))
    right = 0.5 * (b - m) * sum(w * f(xi) for w, xi in zip(_GLW, xr))
    if abs(left + right - whole) <= 1e-13 * max(1.0, abs(whole)):
        return left + right
    return _gl_integral(f, a, m, depth + 1) + _gl_integral(f, m, b, depth + 1)


# ---------------------------------------------------------------------------
# Cartesian integration


def _cartesian_rhs(model):
    n = model.dim

    def rhs(t, Y):
        x, v = Y[:n], Y[n : 2 * n]
        G = model.christoffel(x)
        a = -np.einsum("kij,i,j->k", G, v, v)
        r = np.sqrt(x @ x)
        return np.concatenate([v, a, [float(rho_profile(r)) ** 2]])

    return rhs


def integrate_cartesian(model, state: CartesianState, t_span, rtol=RTOL, atol=ATOL, events=None,
                        tau0: float = 0.0, max_step=np.inf):
    """Solve the geodesic equation in Cartesian components (t-parametrized).

    The last state component integrates tau' = rho(x)^2.  Returns a one-segment
    Trajectory with param 't' plus the raw solver result in meta['sol'].
    """
    n = model.dim
    Y0 = np.concatenate([np.asarray(state.x, float), np.asarray(state.v, float), [tau0]])
    sol = integrate.solve_ivp(_cartesian_rhs(model), t_span, Y0, method="DOP853", rtol=rtol, atol=atol,
                              dense_output=True, events=events, max_step=max_step)
    if sol.status == -1:
        raise IntegrationError(f"Cartesian integration failed: {sol.message}")
    t_end = float(sol.t[-1])
    seg = Segment("cartesian", float(t_span[0]), t_end, sol.sol)
    if t_end < t_span[0]:
        seg = Segment("cartesian", t_end, float(t_span[0]), sol.sol)
    traj = Trajectory(model, [seg], param="t", meta={"sol": sol})
    g0 = model.metric(Y0[:n])
    Y1 = sol.y[:, -1]
    e0 = float(Y0[n:2 * n] @ g0 @ Y0[n:2 * n])
    e1 = float(Y1[n:2 * n] @ model.metric(Y1[:n]) @ Y1[n:2 * n])
    traj.meta["energy_drift"] = abs(np.sqrt(e1) - np.sqrt(e0))
    return traj


# ---------------------------------------------------------------------------
# boundary shooting


def _ev(fun, terminal, direction):
    fun.terminal = terminal
    fun.direction = direction
    return fun


def _entry_phase(model, bd: BoundaryData, tau_budget, t_target=None, rtol=RTOL, atol=ATOL):
    """Integrate from the incoming boundary with the aligned-time clock."""
    n = model.dim
    y = np.asarray(bd.y, float)
    y = y / np.linalg.norm(y)
    eta = np.asarray(bd.eta, float)
    eta = eta - (eta @ y) * y
    Z0 = np.concatenate([[0.0], y, [1.0], eta, [0.0]])

    def rhs(s, Z):
        return compact_field(model, Z, clock=True)

    events = [
        _ev(lambda s, Z: Z[0] - RHO_SWITCH, True, 1),        # handoff
        _ev(lambda s, Z: Z[0], True, -1),                      # exit
        _ev(lambda s, Z: Z[n + 1] - 0.5, True, -1),            # clock validity ends
    ]
    if t_target is not None:
        def hit(s, Z):
            if s <= 0 or Z[0] <= 0:
                return -1.0
            return (-1.0 / (Z[n + 1] * Z[0]) + Z[-1]) - t_target
        events.append(_ev(hit, True, 1))
    sol = integrate.solve_ivp(rhs, (0.0, tau_budget), Z0, method="DOP853", rtol=rtol, atol=atol,
                              dense_output=True, events=events)
    if sol.status == -1:
        raise IntegrationError(f"compact integration failed: {sol.message}")
    names = ["handoff", "exit", "clock_end", "target"]
    reason = None
    for i, te in enumerate(sol.t_events):
        if len(te):
            reason = names[i]
    if sol.status == 0:
        reason = "budget"
    return sol, reason


def _exit_phase(model, Z0, tau0, tau_budget, rtol=RTOL, atol=ATOL):
    n = model.dim

    def rhs(s, Z):
        return compact_field(model, Z)

    events = [_ev(lambda s, Z: Z[0], True, -1), _ev(lambda s, Z: Z[0] - RHO_SWITCH, True, 1)]
    sol = integrate.solve_ivp(rhs, (tau0, tau0 + tau_budget), Z0, method="DOP853", rtol=rtol, atol=atol,
                              dense_output=True, events=events)
    if sol.status == -1:
        raise IntegrationError(f"compact integration failed: {sol.message}")
    if len(sol.t_events[1]):
        reason = "reentry"
    elif len(sol.t_events[0]):
        reason = "exit"
    else:
        reason = "budget"
    return sol, reason


def _to_boundary(model, Z, side):
    n = model.dim
    y = Z[1 : n + 1] / np.linalg.norm(Z[1 : n + 1])
    eta = Z[n + 2 : 2 * n + 2]
    eta = eta - (eta @ y) * y
    return BoundaryData(y, eta, side)


def _clock_sample_t(model, sol, tau):
    n = model.dim
    Z = sol.sol(tau)
    return -1.0 / (Z[n + 1] * Z[0]) + Z[-1]


def shoot_from_boundary(model, bd: BoundaryData, rtol=RTOL, atol=ATOL, tau_budget=None, t_budget=None):
    """Follow the geodesic with incoming data bd to the outgoing boundary.

    Returns (Trajectory in tau, outgoing BoundaryData, tau_plus).
    """
    if bd.side != "-":
        raise ValueError("shooting starts from incoming data (side '-')")
    if not model.has_compact_chart:
        raise ValueError("boundary shooting needs a model with a compact chart")
    n = model.dim
    eta_norm = float(np.linalg.norm(bd.eta))
    if tau_budget is None:
        tau_budget = 20.0 * np.pi / max(eta_norm, 0.05) + 10.0
    if t_budget is None:
        t_budget = 400.0 / RHO_SWITCH + 50 * eta_norm
    segments, events = [], []
    sol1, reason = _entry_phase(model, bd, tau_budget, rtol=rtol, atol=atol)
    if reason == "budget":
        raise IntegrationError("tau budget exhausted before leaving the entry chart")
    if reason == "clock_end":
        # continue in the compact chart without the clock
        tau_c = float(sol1.t[-1])
        seg1 = Segment("compact", 0.0, tau_c, sol1.sol, clock=True)
        segments.append(seg1)
        t_c = _clock_sample_t(model, sol1, tau_c)
        events.append(("clock_end", tau_c))
        Zc = sol1.y[: 2 * n + 2, -1]
        sol2, r2 = _exit_phase(model, Zc, tau_c, tau_budget)
        seg2 = Segment("compact", tau_c, float(sol2.t[-1]), sol2.sol, t_anchor=(tau_c, t_c))
        if r2 == "exit":
            segments.append(seg2)
            events.append(("exit", float(sol2.t[-1])))
            tau_plus = float(sol2.t[-1])
            traj = Trajectory(model, segments, "tau", events)
            return traj, _to_boundary(model, sol2.y[:, -1], "+"), tau_plus
        if r2 == "budget":
            raise IntegrationError("tau budget exhausted in the compact chart")
        # handoff after the clock ended (grazing the switch radius)
        tau_h = float(sol2.t[-1])
        segments.append(Segment("compact", tau_c, tau_h, sol2.sol, t_anchor=(tau_c, t_c)))
        Zh = sol2.y[:, -1]
        t_h = Trajectory(model, segments).t_of_tau(tau_h)
    elif reason == "exit":
        tau_plus = float(sol1.t[-1])
        segments.append(Segment("compact", 0.0, tau_plus, sol1.sol, clock=True))
        events.append(("exit", tau_plus))
        return Trajectory(model, segments, "tau", events), _to_boundary(model, sol1.y[:, -1], "+"), tau_plus
    else:  # handoff
        tau_h = float(sol1.t[-1])
        segments.append(Segment("compact", 0.0, tau_h, sol1.sol, clock=True))
        Zh = sol1.y[: 2 * n + 2, -1]
        t_h = _clock_sample_t(model, sol1, tau_h)
    events.append(("handoff_in", tau_h))
    x, v = compact_to_cartesian(model, Zh)
    R_sw = 1.0 / RHO_SWITCH

    def leave(t, Y):
        return np.sqrt(Y[:n] @ Y[:n]) - R_sw - 1e-9

    leave.terminal, leave.direction = True, 1
    ctraj = integrate_cartesian(model, CartesianState(x, v), (t_h, t_h + t_budget), rtol=rtol, atol=atol,
                                events=[leave], tau0=tau_h)
    sol_c = ctraj.meta["sol"]
    if not len(sol_c.t_events[0]):
        raise IntegrationError("geodesic did not return to the exterior chart (trapped or budget too small)")
    segments.append(ctraj.segments[0])
    Yx = sol_c.y[:, -1]
    t_x, tau_x = float(sol_c.t[-1]), float(Yx[-1])
    events.append(("handoff_out", tau_x))
    Zx = cartesian_to_compact(model, Yx[:n], Yx[n : 2 * n])
    sol3, r3 = _exit_phase(model, Zx, tau_x, tau_budget)
    if r3 != "exit":
        raise IntegrationError(f"outgoing compact phase ended with '{r3}'")
    tau_plus = float(sol3.t[-1])
    segments.append(Segment("compact", tau_x, tau_plus, sol3.sol, t_anchor=(tau_x, t_x)))
    events.append(("exit", tau_plus))
    traj = Trajectory(model, segments, "tau", events)
    return traj, _to_boundary(model, sol3.y[:, -1], "+"), tau_plus


def far_start_time(model, bd: BoundaryData) -> float:
    """|t| at which chart-less AE geodesics are started from their asymptote."""
    return 200.0 + 4.0 * float(np.linalg.norm(bd.eta)) + 10.0 * model.euclidean_radius


def asymptotic_start(model, x0, v0, t) -> CartesianState:
    """State at very negative t of the geodesic asymptotic to x0 + s v0.

    First-order tail correction about the line: with F(s) = Gamma(v0, v0) at
    x0 + s v0, dv = -int_{-inf}^t F and dx = -int_{-inf}^t (t - s) F; the
    remainder is quadratic in the perturbation.
    """
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)

    def force(s):
        G = model.christoffel(x0 + s * v0)
        return np.einsum("kij,i,j->k", G, v0, v0)

    # substitute s = t - u, u in [0, inf)
    dv = -integrate.quad_vec(lambda u: force(t - u), 0.0, np.inf, epsabs=1e-15, epsrel=1e-12)[0]
    dx = -integrate.quad_vec(lambda u: u * force(t - u), 0.0, np.inf, epsabs=1e-15, epsrel=1e-12)[0]
    x = x0 + t * v0 + dx
    v = v0 + dv
    return CartesianState(x, v / np.sqrt(v @ model.metric(x) @ v))


def state_at_time(model, bd: BoundaryData, t: float, rtol=RTOL, atol=ATOL) -> CartesianState:
    """Cartesian state at aligned time t of the geodesic with incoming data bd.

    Time is aligned so that t = -1/tau + o(1) as tau -> 0, i.e. the geodesic is
    asymptotic at -infinity to the Euclidean line with the same incoming data,
    parametrized with its foot at t = 0.  AE models without a compact chart
    are started far out with a first-order tail correction to that line.
    """
    n = model.dim
    if not model.has_compact_chart:
        x0, v0 = line_from_incoming(bd)
        if not model.is_asymptotically_euclidean or model.kind == "euclidean":
            x = x0 + t * v0
            return CartesianState(x, v0 / np.sqrt(v0 @ model.metric(x) @ v0))
        t_far = min(t, -far_start_time(model, bd))
        st = asymptotic_start(model, x0, v0, t_far)
        if t_far == t:
            return st
        tr = integrate_cartesian(model, st, (t_far, t), rtol=rtol, atol=atol)
        Y = tr.meta["sol"].y[:, -1]
        return CartesianState(Y[:n], Y[n : 2 * n])
    eta_norm = float(np.linalg.norm(bd.eta))
    tau_budget = 20.0 * np.pi / max(eta_norm, 0.05) + 10.0
    sol1, reason = _entry_phase(model, bd, tau_budget, t_target=t, rtol=rtol, atol=atol)
    Z = sol1.y[: 2 * n + 2, -1]
    if reason == "target":
        return CartesianState(*compact_to_cartesian(model, Z))
    if reason in ("handoff", "clock_end"):
        t0 = _clock_sample_t(model, sol1, float(sol1.t[-1]))
        x, v = compact_to_cartesian(model, Z)
        if t < t0:
            raise IntegrationError("target time precedes the chart handoff")
        if t == t0:
            return CartesianState(x, v)
        tr = integrate_cartesian(model, CartesianState(x, v), (t0, t), rtol=rtol, atol=atol)
        Y = tr.meta["sol"].y[:, -1]
        return CartesianState(Y[:n], Y[n : 2 * n])
    raise IntegrationError(f"could not reach aligned time {t} ({reason})")


def geodesic_from_boundary(model, bd: BoundaryData, t_start: float, t_end: float, rtol=RTOL, atol=ATOL,
                           max_step=np.inf):
    """Cartesian trajectory on [t_start, t_end] in aligned time."""
    st = state_at_time(model, bd, t_start, rtol=rtol, atol=atol)
    return integrate_cartesian(model, st, (t_start, t_end), rtol=rtol, atol=atol, max_step=max_step)


def extract_boundary_data(model, traj: Trajectory, side: str = "+", rtol=RTOL, atol=ATOL) -> BoundaryData:
    """Limit (y, eta) at the outgoing ('+') or incoming ('-') end of a
    Cartesian trajectory, continuing in the compact chart when available."""
    n = model.dim
    segs = [s for s in traj.segments if s.chart == "cartesian"]
    if not segs:
        raise ValueError("trajectory has no Cartesian segment")
    if side == "+":
        Y = segs[-1].dense(segs[-1].end)
        x, v = Y[:n], Y[n : 2 * n]
    else:
        Y = segs[0].dense(segs[0].start)
        x, v = Y[:n], -Y[n : 2 * n]
    if np.linalg.norm(x) < 1.0 / RHO_SWITCH or x @ v <= 0:
        raise ValueError("trajectory end is not in the outgoing exterior region")
    Z = cartesian_to_compact(model, x, v)
    if model.has_compact_chart:
        sol, r = _exit_phase(model, Z, 0.0, 50.0 * np.pi / max(np.linalg.norm(Z[n + 2:]), 0.05) + 10.0,
                             rtol=rtol, atol=atol)
        if r != "exit":
            raise IntegrationError("boundary not reached from trajectory end")
        Z = sol.y[:, -1]
    out = _to_boundary(model, Z, "+")
    if side == "-":
        return BoundaryData(out.y, -out.eta, "-")
    return out


def reparametrize(traj: Trajectory, target: str) -> Trajectory:
    """Same trajectory with the sampling clock switched to 't' or 'tau'."""
    if target not in ("t", "tau"):
        raise ValueError("target must be 't' or 'tau'")
    return Trajectory(traj.model, traj.segments, target, list(traj.events), dict(traj.meta))


def fit_time_offset(traj: Trajectory, taus) -> tuple:
    """Fit t(tau) = -1/tau + c0 + c1 tau on small tau; returns (c0, c1)."""
    taus = np.asarray(taus, dtype=float)
    ts = np.array([traj.t_of_tau(s) for s in taus])
    A = np.vstack([np.ones_like(taus), taus]).T
    coef, *_ = np.linalg.lstsq(A, ts + 1.0 / taus, rcond=None)
    return float(coef[0]), float(coef[1])


def conjugacy_theta(model, x0, v0, rtol=RTOL, atol=ATOL) -> CartesianState:
    """Image of (x0, v0) under the flow conjugacy: the g-geodesic with the
    incoming data of the line x0 + t v0, read at the aligned time of x0."""
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    v0 = v0 / np.linalg.norm(v0)
    bd, _ = euclidean_line_data(x0, v0)
    s = float(x0 @ v0)  # position of x0 along the line relative to its foot
    return state_at_time(model, bd, s, rtol=rtol, atol=atol)
