"""Parallel frames, curvature matrices and matrix Jacobi fields along geodesics.

Along a unit-speed geodesic with parallel orthonormal frame (Y_1..Y_{n-1}, gamma')
the Jacobi equation reduces to A'' + R(t) A = 0 with the symmetric curvature
matrix R_ij = g(Riem(Y_j, gamma') gamma', Y_i).  The stable family starts at
A = Id, A' = 0 far in the past; the unstable family grows like t Id there.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate, interpolate, optimize

from . import flow
from ._numerics import fit_power_law, orthonormal_complement

log = logging.getLogger(__name__)

REORTHO_EVERY = 50
SUBDIVIDE = 8


# ---------------------------------------------------------------------------
# frames


def _g_lowdin(Y, g):
    """Symmetric (Lowdin) g-orthonormalization of the columns of Y."""
    S = Y.T @ g @ Y
    w, U = np.linalg.eigh(S)
    return Y @ (U @ np.diag(w**-0.5) @ U.T)


@dataclass
class ParallelFrame:
    """Geodesic with a parallel frame, piecewise dense in t.

    Columns of Y are the transverse frame vectors; gamma' is the last member.
    """

    model: object
    nodes: np.ndarray  # step boundaries
    pieces: list  # dense interpolants per step, each t -> state
    drift: list = field(default_factory=list)

    @property
    def t_start(self):
        return float(self.nodes[0])

    @property
    def t_end(self):
        return float(self.nodes[-1])

    def state(self, t):
        """(x, v, Y) at times t (scalar or 1-d array)."""
        n = self.model.dim
        t = np.atleast_1d(np.asarray(t, dtype=float))
        idx = np.clip(np.searchsorted(self.nodes, t, side="right") - 1, 0, len(self.pieces) - 1)
        out = np.empty((t.size, 2 * n + n * (n - 1)))
        for k in np.unique(idx):
            sel = idx == k
            out[sel] = self.pieces[k](t[sel]).T
        x = out[:, :n]
        v = out[:, n : 2 * n]
        Y = out[:, 2 * n :].reshape(-1, n, n - 1)
        return x, v, Y

    def sample_times(self, subdivide=SUBDIVIDE):
        segs = [np.linspace(a, b, subdivide + 1)[:-1] for a, b in zip(self.nodes[:-1], self.nodes[1:])]
        return np.concatenate(segs + [self.nodes[-1:]])


def _frame_rhs(model):
    n = model.dim

    def rhs(t, S):
        x, v = S[:n], S[n : 2 * n]
        Y = S[2 * n :].reshape(n, n - 1)
        G = model.christoffel(x)
        acc = -np.einsum("kij,i,j->k", G, v, v)
        dY = -np.einsum("kij,i,jl->kl", G, v, Y)
        return np.concatenate([v, acc, dY.ravel()])

    return rhs


def initial_frame(model, x, v, transverse=None):
    """g-orthonormal transverse frame at (x, v), starting from the Euclidean
    complement of v (or the given columns) and orthogonalized against v."""
    n = model.dim
    g = model.metric(np.asarray(x, dtype=float))
    if transverse is None:
        u = v / np.linalg.norm(v)
        transverse = orthonormal_complement(u).T
    Y = np.array(transverse, dtype=float).reshape(n, n - 1)
    vn = v / np.sqrt(v @ g @ v)
    Y = Y - np.outer(vn, vn @ g @ Y)
    return _g_lowdin(Y, g)


def parallel_frame(model, x0, v0, t_span, Y0=None, rtol=flow.RTOL, atol=flow.ATOL,
                   reortho_every=REORTHO_EVERY, max_step=np.inf) -> ParallelFrame:
    """Integrate the geodesic together with a parallel transverse frame."""
    n = model.dim
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    Y = initial_frame(model, x0, v0, Y0)
    S = np.concatenate([x0, v0, Y.ravel()])
    t0, t1 = map(float, t_span)
    rhs = _frame_rhs(model)
    nodes, pieces, drift = [t0], [], []
    direction = 1.0 if t1 >= t0 else -1.0
    while (t1 - nodes[-1]) * direction > 0:
        solver = integrate.DOP853(rhs, nodes[-1], S, t1, rtol=rtol, atol=atol, max_step=max_step)
        for _ in range(reortho_every):
            msg = solver.step()
            if solver.status == "failed":
                raise flow.IntegrationError(f"frame integration failed: {msg}")
            pieces.append(solver.dense_output())
            nodes.append(solver.t)
            if solver.status == "finished":
                break
        S = solver.y.copy()
        x, v = S[:n], S[n : 2 * n]
        Y = S[2 * n :].reshape(n, n - 1)
        g = model.metric(x)
        vn = v / np.sqrt(v @ g @ v)
        full = np.column_stack([Y, vn])
        drift.append(float(np.max(np.abs(full.T @ g @ full - np.eye(n)))))
        Y = Y - np.outer(vn, vn @ g @ Y)
        S[2 * n :] = _g_lowdin(Y, g).ravel()
    nodes = np.asarray(nodes)
    if direction < 0:
        nodes, pieces = nodes[::-1], pieces[::-1]
    return ParallelFrame(model, nodes, pieces, drift)


# ---------------------------------------------------------------------------
# curvature


@dataclass
class CurvatureSamples:
    t: np.ndarray
    R: np.ndarray  # (N, n-1, n-1)
    asymmetry: float = 0.0
    _spline: Optional[object] = None

    def __call__(self, t):
        if self._spline is None:
            self._spline = interpolate.CubicSpline(self.t, self.R.reshape(len(self.t), -1), axis=0)
        k = self.R.shape[1]
        return self._spline(t).reshape(np.shape(t) + (k, k))


def curvature_matrix(model, x, v, Y):
    """R_ij = g(Riem(Y_j, v) v, Y_i), batched over leading axes."""
    Rm = model.riemann(x)
    g = model.metric(x)
    Rl = np.einsum("...ae,...ebcd->...abcd", g, Rm)
    return np.einsum("...abcd,...ai,...b,...cj,...d->...ij", Rl, Y, v, Y, v)


def curvature_along(model, frame: ParallelFrame, subdivide=SUBDIVIDE, chunk=512) -> CurvatureSamples:
    """Curvature matrix sampled on the solver nodes refined `subdivide` times."""
    t = frame.sample_times(subdivide)
    out = []
    for i in range(0, t.size, chunk):
        x, v, Y = frame.state(t[i : i + chunk])
        out.append(curvature_matrix(model, x, v, Y))
    R = np.concatenate(out)
    asym = float(np.max(np.abs(R - np.swapaxes(R, -1, -2)))) if R.size else 0.0
    R = 0.5 * (R + np.swapaxes(R, -1, -2))
    return CurvatureSamples(t, R, asym)


# ---------------------------------------------------------------------------
# matrix Jacobi equation


@dataclass
class JacobiSolution:
    t0: float
    t1: float
    sol: object  # dense output of the (A, A') system
    k: int
    wronskian_growth: float

    def A(self, t):
        Z = self.sol(np.asarray(t, dtype=float))
        k = self.k
        return np.moveaxis(Z[: k * k].reshape((k, k) + np.shape(t)), (0, 1), (-2, -1))

    def Adot(self, t):
        Z = self.sol(np.asarray(t, dtype=float))
        k = self.k
        return np.moveaxis(Z[k * k :].reshape((k, k) + np.shape(t)), (0, 1), (-2, -1))


def propagate_jacobi(curvature, A0, Adot0, t_span, rtol=1e-11, atol=1e-13, events=None, max_step=np.inf):
    """Solve A'' + R(t) A = 0; `curvature` is a callable t -> (k, k) matrix."""
    A0 = np.atleast_2d(np.asarray(A0, dtype=float))
    Adot0 = np.atleast_2d(np.asarray(Adot0, dtype=float))
    k = A0.shape[0]

    def rhs(t, Z):
        A = Z[: k * k].reshape(k, k)
        return np.concatenate([Z[k * k :], -(curvature(t) @ A).ravel()])

    Z0 = np.concatenate([A0.ravel(), Adot0.ravel()])
    sol = integrate.solve_ivp(rhs, t_span, Z0, method="DOP853", rtol=rtol, atol=atol, dense_output=True,
                              events=events, max_step=max_step)
    if sol.status == -1:
        raise flow.IntegrationError(f"Jacobi propagation failed: {sol.message}")
    W0 = A0.T @ Adot0 - Adot0.T @ A0
    A1 = sol.y[: k * k, -1].reshape(k, k)
    Ad1 = sol.y[k * k :, -1].reshape(k, k)
    W1 = A1.T @ Ad1 - Ad1.T @ A1
    js = JacobiSolution(float(t_span[0]), float(sol.t[-1]), sol.sol, k, float(np.max(np.abs(W1 - W0))))
    js.events = sol.t_events
    return js


def zero_curvature(k):
    return lambda t: np.zeros((k, k))


# ---------------------------------------------------------------------------
# families along eta-geodesics


@dataclass
class EtaGeodesic:
    """Geodesic with incoming data (y_minus, eta), frame and curvature samples."""

    model: object
    bd: flow.BoundaryData
    frame: ParallelFrame
    curvature: CurvatureSamples

    @property
    def t_start(self):
        return self.frame.t_start

    @property
    def t_end(self):
        return self.frame.t_end


def start_time(model, bd: flow.BoundaryData, tol=1e-8, probe=None, minimum=50.0, maximum=2e4):
    """T_start with predicted truncation C T^{-m} below tol, C from a curvature probe."""
    m = max(model.decay_order, 1)
    if model.kind == "euclidean":
        return minimum
    eta = float(np.linalg.norm(bd.eta))
    T0 = probe if probe is not None else 4.0 * max(model.euclidean_radius, 1.0) + 2.0 * eta + 20.0
    x0, v0 = flow.line_from_incoming(bd)
    xs = (x0 - T0 * v0)[None]
    vs = v0[None]
    Y = orthonormal_complement(v0).T[None]
    R = np.linalg.norm(curvature_matrix(model, xs, vs, Y))
    C = R * (T0 + eta) ** (m + 2) / (m * (m + 1))
    T = (C / tol) ** (1.0 / m) if C > 0 else minimum
    return float(min(max(T, minimum), maximum))


def eta_geodesic(model, bd: flow.BoundaryData, t_start: float, t_end: float, rtol=flow.RTOL, atol=flow.ATOL,
                 transverse=None, subdivide=SUBDIVIDE, max_step=np.inf) -> EtaGeodesic:
    """Build the geodesic with incoming data bd on [t_start, t_end] (aligned time)."""
    st = flow.state_at_time(model, bd, t_start, rtol=rtol, atol=atol)
    if transverse is None:
        transverse = orthonormal_complement(-np.asarray(bd.y, float)).T
    fr = parallel_frame(model, st.x, st.v, (t_start, t_end), Y0=transverse, rtol=rtol, atol=atol, max_step=max_step)
    curv = curvature_along(model, fr, subdivide)
    return EtaGeodesic(model, bd, fr, curv)


@dataclass
class StableFamily:
    geodesic: EtaGeodesic
    solution: JacobiSolution
    H: np.ndarray
    tail_slope: np.ndarray
    plateau_exponent: float
    plateau_residual: float
    T_start: float
    T_end: float
    diagnostics: dict = field(default_factory=dict)

    def A(self, t):
        return self.solution.A(t)

    def Adot(self, t):
        return self.solution.Adot(t)


def _tail_constant(sol: JacobiSolution, t):
    """A - t A' (tends to the constant of the affine tail)."""
    return sol.A(t) - t[..., None, None] * sol.Adot(t)


def _fit_decay(ts, vals):
    ok = vals > 0
    if ok.sum() < 3:
        return -np.inf, 0.0
    p, _, r = fit_power_law(np.abs(ts[ok]), vals[ok])
    return p, r


def stable_family(model, bd: flow.BoundaryData, T_start=None, T_end=None, tol=1e-8, geodesic=None,
                  rtol=flow.RTOL, atol=flow.ATOL) -> StableFamily:
    """A with A = Id, A' = 0 at -T_start, propagated to T_end.

    H is the constant of the affine tail A(t) ~ t L + H at +infinity, read off
    as the mean of A - t A' over the final 10% of the window; when the
    scattering is antipodal L = 0 and H is the plateau of A itself.
    """
    if geodesic is None:
        if T_start is None:
            T_start = start_time(model, bd, tol)
        if T_end is None:
            T_end = T_start
        geodesic = eta_geodesic(model, bd, -T_start, T_end, rtol=rtol, atol=atol)
    T_start, T_end = -geodesic.t_start, geodesic.t_end
    k = model.dim - 1
    sol = propagate_jacobi(geodesic.curvature, np.eye(k), np.zeros((k, k)), (-T_start, T_end))
    tf = np.linspace(0.9 * T_end, T_end, 41)
    H = np.mean(_tail_constant(sol, tf), axis=0)
    L = np.mean(sol.Adot(tf), axis=0)
    tw = np.geomspace(max(T_end / 100, 1.0), T_end / 10, 24)
    res = np.linalg.norm(_tail_constant(sol, tw) - H, axis=(-2, -1))
    p, r = _fit_decay(tw, res)
    fam = StableFamily(geodesic, sol, H, L, p, r, T_start, T_end)
    fam.diagnostics = {"wronskian_growth": sol.wronskian_growth, "frame_drift": max(geodesic.frame.drift or [0.0]),
                       "curvature_asymmetry": geodesic.curvature.asymmetry}
    return fam


def minus_infinity_exponent(fam: StableFamily, window=(0.01, 0.1)):
    """Fitted exponent of |A(t) - Id| on t in -T_start * [window]."""
    T = fam.T_start
    ts = -np.geomspace(window[0] * T, window[1] * T, 24)
    vals = np.linalg.norm(fam.A(ts) - np.eye(fam.H.shape[0]), axis=(-2, -1))
    return _fit_decay(ts, vals)


@dataclass
class UnstableFamily:
    solution: JacobiSolution
    G: np.ndarray
    stable: StableFamily
    P: np.ndarray  # slope of the affine tail at +infinity
    Q: np.ndarray  # constant of the affine tail
    exponents: dict

    def B(self, t):
        t = np.asarray(t, dtype=float)
        return self.solution.A(t) - self.G @ self.stable.A(t) if np.ndim(t) == 0 else \
            self.solution.A(t) - np.einsum("ij,...jk->...ik", self.G, self.stable.A(t))

    def Bdot(self, t):
        t = np.asarray(t, dtype=float)
        return self.solution.Adot(t) - np.einsum("ij,...jk->...ik", self.G, self.stable.Adot(t))


def unstable_family(model, bd: flow.BoundaryData = None, stable: StableFamily = None, **kw) -> UnstableFamily:
    """B with B = t Id, B' = Id at -T_start; the constant offset left by the
    truncation is removed by subtracting G A with G fitted on the -infinity
    tail (model B - t Id ~ G + D |t|^{1-m})."""
    if stable is None:
        stable = stable_family(model, bd, **kw)
    geo = stable.geodesic
    T0, T1 = stable.T_start, stable.T_end
    k = model.dim - 1
    sol = propagate_jacobi(geo.curvature, -T0 * np.eye(k), np.eye(k), (-T0, T1))
    m = max(model.decay_order, 1)
    ts = -np.geomspace(0.01 * T0, 0.5 * T0, 40)
    D = sol.A(ts) - ts[:, None, None] * np.eye(k)
    Amat = np.vstack([np.ones_like(ts), np.abs(ts) ** (1.0 - m)]).T
    G = np.empty((k, k))
    for i in range(k):
        for j in range(k):
            coef, *_ = np.linalg.lstsq(Amat, D[:, i, j], rcond=None)
            G[i, j] = coef[0]
    uf = UnstableFamily(sol, G, stable, np.eye(k), np.zeros((k, k)), {})
    tf = np.linspace(0.9 * T1, T1, 41)
    P = np.mean(uf.Bdot(tf), axis=0)
    Q = np.mean(uf.B(tf) - tf[:, None, None] * uf.Bdot(tf), axis=0)
    uf.P, uf.Q = P, Q
    tm = -np.geomspace(max(T0 / 100, 1.0), T0 / 10, 24)
    pm, rm = _fit_decay(tm, np.linalg.norm(uf.B(tm) - tm[:, None, None] * np.eye(k), axis=(-2, -1)))
    tp = np.geomspace(max(T1 / 100, 1.0), T1 / 10, 24)
    pp, rp = _fit_decay(tp, np.linalg.norm(uf.B(tp) - (tp[:, None, None] * P + Q), axis=(-2, -1)))
    lit = np.linalg.norm(uf.B(tp) - tp[:, None, None] * stable.H, axis=(-2, -1))
    uf.exponents = {"minus": pm, "minus_residual": rm, "plus_affine": pp, "plus_residual": rp,
                    "plus_literal_max": float(np.max(lit)), "slope_minus_H": float(np.linalg.norm(P - stable.H))}
    return uf


def b_r_identity(fam: StableFamily, R: float, npts: int = 400):
    """Compare A(t) (int_{-R}^t A^{-1}A^{-T}) A(-R)^T with the Jacobi solution
    started at -R with value 0 and derivative Id.  Returns max abs difference."""
    k = fam.H.shape[0]
    s = np.linspace(-R, R, npts)
    As = fam.A(s)
    # cumulative integral on a 16x finer grid, read back on the coarse nodes
    fine = np.linspace(-R, R, 16 * (npts - 1) + 1)
    Af = np.linalg.inv(fam.A(fine))
    Mf = (Af @ np.swapaxes(Af, -1, -2)).reshape(fine.size, -1)
    cumf = integrate.cumulative_simpson(Mf, x=fine, axis=0, initial=0).reshape(fine.size, k, k)
    cum = cumf[::16]
    BR = As @ cum @ fam.A(-R).T
    direct = propagate_jacobi(fam.geodesic.curvature, np.zeros((k, k)), np.eye(k), (-R, R))
    return float(np.max(np.abs(BR - direct.A(s))))


def conjugate_scan(model, x0, v0, window, frame: ParallelFrame = None, rtol=1e-11, atol=1e-13):
    """Times in (window) where the Jacobi family vanishing at the window start
    becomes singular again (sign changes of det A, refined on dense output)."""
    t0, t1 = map(float, window)
    if frame is None:
        frame = parallel_frame(model, x0, v0, (t0, t1))
    curv = curvature_along(model, frame)
    k = model.dim - 1
    sol = propagate_jacobi(curv, np.zeros((k, k)), np.eye(k), (t0, t1), rtol=rtol, atol=atol)
    nodes = np.unique(np.concatenate([curv.t, np.linspace(t0, t1, 2001)]))
    nodes = nodes[(nodes > t0) & (nodes <= t1)]
    # skip the trivial zero at the start
    nodes = nodes[nodes > t0 + 1e-6 * max(1.0, t1 - t0)]
    dets = np.linalg.det(sol.A(nodes))
    roots = []
    for a, b, da, db in zip(nodes[:-1], nodes[1:], dets[:-1], dets[1:]):
        if da == 0.0:
            roots.append(float(a))
        elif da * db < 0:
            roots.append(float(optimize.brentq(lambda s: np.linalg.det(sol.A(s)), a, b, xtol=1e-13)))
    return roots
