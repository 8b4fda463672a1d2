"""Volumes of geodesic cylinders and the Jensen / Hoelder stability gaps.

The cylinder is the image of {|t| <= R, |eta| <= R} under (t, eta) -> gamma_eta(t),
where gamma_eta has incoming data (p_-, eta), p_- = -e_n, in aligned time.  Its
g-volume is the integral of det A_eta(t) (stable Jacobi family).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import flow, jacobi
from ._numerics import fit_power_law, gauss_legendre_panels


def unit_ball_volume(k: int) -> float:
    return math.pi ** (k / 2) / math.gamma(k / 2 + 1)


def vol_euclidean_cylinder(R: float, n: int) -> float:
    """2 R^n times the volume of the unit (n-1)-ball."""
    return 2.0 * R**n * unit_ball_volume(n - 1)


def default_breaks(R: float, base: float = 1.25, structure=(), per_structure: int = 8):
    """Panel edges 0, base, 2 base, 4 base, ... capped at R, with the interval
    up to twice the largest structure radius cut into uniform panels."""
    edges = [0.0]
    e = base
    while e < R * (1 - 1e-12):
        edges.append(e)
        e *= 2
    if structure:
        top = 2.0 * max(structure)
        fine = np.linspace(0.0, top, int(per_structure * top / min(structure)) + 1)
        edges.extend(fine[fine < R])
    edges.append(R)
    return np.unique(np.array(edges))


@dataclass
class CylinderSpec:
    R: float
    n: int
    radial_breaks: Optional[np.ndarray] = None
    radial_nodes: int = 12
    angular_nodes: int = 8  # 1 is exact for models symmetric about the axis
    t_nodes: int = 16
    tol: float = 1e-8  # truncation target for the Jacobi start time
    structure: tuple = ()  # radii where the model changes character

    def __post_init__(self):
        if self.R <= 0:
            raise ValueError("R must be positive")
        if self.n not in (2, 3):
            raise ValueError("cylinders are implemented for n = 2, 3")
        if self.radial_breaks is None:
            self.radial_breaks = default_breaks(self.R)
        self.radial_breaks = np.asarray(self.radial_breaks, dtype=float)

    @property
    def axis(self):
        e = np.zeros(self.n)
        e[-1] = 1.0
        return e

    def eta_nodes(self):
        """Quadrature nodes (as vectors orthogonal to the axis) and weights."""
        r, w = gauss_legendre_panels(self.radial_breaks, self.radial_nodes)
        if self.n == 2:
            pts = np.concatenate([-r[::-1], r])
            wts = np.concatenate([w[::-1], w])
            return np.column_stack([pts, np.zeros_like(pts)]), wts
        K = self.angular_nodes
        phi = 2 * np.pi * np.arange(K) / K
        P = (r[:, None, None] * np.stack([np.cos(phi), np.sin(phi), 0 * phi], -1)[None]).reshape(-1, 3)
        W = (w * r)[:, None] * np.full(K, 2 * np.pi / K)[None]
        return P, W.ravel()

    def t_rule(self):
        half = default_breaks(self.R, structure=tuple(self.structure))
        br = np.unique(np.concatenate([-half, half]))
        return gauss_legendre_panels(br, self.t_nodes)


def _family(model, eta_vec, T_end, tol, cache):
    key = tuple(np.round(eta_vec, 14))
    fam = cache.get(key) if cache is not None else None
    if fam is None or fam.T_end < T_end:
        n = model.dim
        y = np.zeros(n)
        y[-1] = -1.0
        bd = flow.BoundaryData(y, np.asarray(eta_vec, float), "-")
        Ts = jacobi.start_time(model, bd, tol)
        fam = jacobi.stable_family(model, bd, T_start=max(Ts, T_end), T_end=T_end)
        if cache is not None:
            cache[key] = fam
    return fam


@dataclass
class CylinderVolume:
    R: float
    vol_g: float
    vol_g0: float
    difference: float
    min_det: float
    nodes: int
    history: list = field(default_factory=list)


def vol_g_cylinder(model, spec: CylinderSpec, cache: Optional[dict] = None, T_end: Optional[float] = None):
    """Integral of det A_eta(t) over |t| <= R, |eta| <= R (difference to the
    Euclidean cylinder accumulated directly from det A - 1)."""
    P, W = spec.eta_nodes()
    tn, tw = spec.t_rule()
    T_end = spec.R if T_end is None else T_end
    diff, mind = 0.0, np.inf
    for eta, w in zip(P, W):
        if model.kind == "euclidean":
            continue
        fam = _family(model, eta, T_end, spec.tol, cache)
        d = np.linalg.det(fam.A(tn))
        mind = min(mind, float(d.min()))
        diff += w * float(tw @ (d - 1.0))
    v0 = vol_euclidean_cylinder(spec.R, spec.n)
    if model.kind == "euclidean":
        mind = 1.0
    return CylinderVolume(spec.R, v0 + diff, v0, diff, mind, len(W))


def volume_growth(model, R_values, n: Optional[int] = None, angular_nodes: int = 8, radial_nodes: int = 12,
                  base: float = 1.25, tol: float = 1e-8):
    """Cylinder volume differences over a ladder of R (families shared between R)."""
    n = model.dim if n is None else n
    R_values = np.asarray(sorted(R_values), dtype=float)
    Rmax = float(R_values[-1])
    cache: dict = {}
    rows = []
    for R in R_values:
        br = default_breaks(R, base, getattr(model, "structure_radii", ()) or ())
        spec = CylinderSpec(R, n, radial_breaks=br, radial_nodes=radial_nodes, angular_nodes=angular_nodes, tol=tol,
                            structure=tuple(getattr(model, "structure_radii", ()) or ()))
        rows.append(vol_g_cylinder(model, spec, cache, T_end=Rmax))
    diffs = np.array([abs(r.difference) for r in rows])
    p = fit_power_law(R_values, diffs)[0] if np.all(diffs > 0) else -np.inf
    return rows, p


def monte_carlo_volume(model, R: float, samples: int = 400, rng=None, h: float = 1e-5):
    """Direct volume oracle: mean over uniform (t, eta) in the cylinder of
    |det d(t, eta) gamma_eta(t)| sqrt(det g), with central differences of
    the geodesic map.  Returns (estimate, standard error)."""
    rng = np.random.default_rng(7) if rng is None else rng
    n = model.dim
    y = np.zeros(n)
    y[-1] = -1.0
    vals = []
    for _ in range(samples):
        while True:
            eta = rng.uniform(-R, R, size=n - 1)
            if np.linalg.norm(eta) <= R:
                break
        t = rng.uniform(-R, R)

        def point(tt, ee):
            bd = flow.BoundaryData(y, np.concatenate([ee, [0.0]]), "-")
            return flow.state_at_time(model, bd, tt).x

        x0 = flow.state_at_time(model, flow.BoundaryData(y, np.concatenate([eta, [0.0]]), "-"), t)
        cols = [x0.v]
        for k in range(n - 1):
            e = np.zeros(n - 1)
            e[k] = h
            cols.append((point(t, eta + e) - point(t, eta - e)) / (2 * h))
        J = np.column_stack(cols)
        vals.append(abs(np.linalg.det(J)) * np.sqrt(np.linalg.det(model.metric(x0.x))))
    vals = np.array(vals)
    measure = 2 * R * unit_ball_volume(n - 1) * R ** (n - 1)
    return float(measure * vals.mean()), float(measure * vals.std(ddof=1) / np.sqrt(samples))


# ---------------------------------------------------------------------------
# stability gaps


@dataclass
class JensenGap:
    lhs: float
    rhs: float
    gap: float
    constant: float  # admissible constant used in rhs
    constant_fit: float  # largest constant keeping the gap >= 0
    deficiency: float  # the integral multiplying the constant


def _weights(t):
    t = np.asarray(t, dtype=float)
    return np.gradient(t) if t.size > 1 else np.ones(1)


def jensen_det_gap(A, t, weights=None) -> JensenGap:
    """Both sides of the Jensen determinant inequality for a family A_t.

    With f = det A_t, M = int f^{-2/k} and S = int A^{-1}A^{-T} (k = size of A):
        lhs = M^{-k/2} - det(S)^{-1/2}
        rhs = C M^{-(k+2)/2} int || A^{-1}A^{-T} - S / (f^{2/k} M) ||^2 f^{2/k}
    with the admissible C = (1/4) Lambda^{-(k+4)/2}, Lambda the largest eigenvalue
    of the normalized matrices f^{2/k} A^{-1}A^{-T} (convexity bound for det^{-1/2}).
    `weights` are quadrature weights for the samples t (trapezoid-like default).
    """
    A = np.asarray(A, dtype=float)
    k = A.shape[-1]
    w = _weights(t) if weights is None else np.asarray(weights, dtype=float)
    f = np.linalg.det(A)
    if np.any(f <= 0):
        raise ValueError("det A_t must be positive")
    Ainv = np.linalg.inv(A)
    G = Ainv @ np.swapaxes(Ainv, -1, -2)
    fk = f ** (2.0 / k)
    M = float(w @ (1.0 / fk))
    S = np.einsum("t,tij->ij", w, G)
    lhs = M ** (-k / 2) - np.linalg.det(S) ** -0.5
    dev = G - S[None] / (fk[:, None, None] * M)
    deficiency = float(w @ (np.sum(dev * dev, axis=(-2, -1)) * fk))
    X = G * fk[:, None, None]
    Lam = float(np.max(np.linalg.eigvalsh(X)))
    C = 0.25 * Lam ** (-(k + 4) / 2)
    scale = M ** (-(k + 2) / 2) * deficiency
    rhs = C * scale
    fit = lhs / scale if scale > 0 else np.inf
    return JensenGap(float(lhs), float(rhs), float(lhs - rhs), C, float(fit), deficiency)


@dataclass
class HolderGap:
    lhs: float
    base: float
    deficiency: float
    c_n: float
    rhs: float
    gap: float


_C_CACHE: dict = {}


def holder_constant(n: int) -> float:
    """Admissible c_n.  For n = 3 the inequality reads 1/x^2 >= 1 + 2c(1 - x)
    with x the cosine between f^{1/2} and f^{-1/2}, which holds with c = 1.
    Other n: half the smallest ratio observed on a fixed random family."""
    if n == 3:
        return 1.0
    if n not in _C_CACHE:
        rng = np.random.default_rng(2024)
        t = np.linspace(-1, 1, 801)
        ratios = []
        for _ in range(400):
            amp = rng.uniform(0.05, 2.0)
            f = np.exp(amp * sum(rng.normal() * np.cos((j + 1) * np.pi * t / 2 + rng.uniform(0, 6)) / (j + 1)
                                 for j in range(4)))
            g = _holder_parts(f, t, n)
            if g[2] > 1e-12:
                ratios.append((g[0] / g[1] - 1.0) / g[2])
        _C_CACHE[n] = 0.5 * float(min(ratios))
    return _C_CACHE[n]


def _holder_parts(f, t, n, weights=None):
    w = _weights(t) if weights is None else np.asarray(weights, float)
    L = float(np.sum(w))  # 2R
    If = float(w @ f)
    q = 2.0 / (n - 1)
    Iq = float(w @ f ** (-q))
    base = L ** ((n + 1) / 2) * Iq ** (-(n - 1) / 2)
    u = np.sqrt(f) / np.sqrt(If) - f ** (-1.0 / (n - 1)) / np.sqrt(Iq)
    return If, base, float(w @ (u * u))


def holder_gap(f, t, n: int, c_n: Optional[float] = None, weights=None) -> HolderGap:
    """int f - (2R)^{(n+1)/2} (int f^{-2/(n-1)})^{-(n-1)/2} (1 + c_n ||u||^2)."""
    f = np.asarray(f, dtype=float)
    if np.any(f <= 0):
        raise ValueError("f must be positive")
    c = holder_constant(n) if c_n is None else c_n
    If, base, d = _holder_parts(f, t, n, weights)
    rhs = base * (1.0 + c * d)
    return HolderGap(If, base, d, c, rhs, If - rhs)
