"""Small numerical helpers shared across the package."""

from __future__ import annotations

import numpy as np

CSTEP = 1e-30  # complex-step size; exact to roundoff for analytic maps


def smoothstep(s):
    """Quintic C^2 step: 0 for s<=0, 1 for s>=1. Complex-safe (branch on real part)."""
    s = np.asarray(s)
    sr = np.real(s)
    inner = s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    out = np.where(sr <= 0.0, 0.0 * s, np.where(sr >= 1.0, 1.0 + 0.0 * s, inner))
    return out


def smooth_transition(s):
    """C-infinity step exp(-1/s) / (exp(-1/s) + exp(-1/(1-s))); complex-safe."""
    s = np.asarray(s)
    sr = np.real(s)
    inside = (sr > 0.0) & (sr < 1.0)
    si = np.where(inside, s, 0.5)
    a = np.exp(-1.0 / si)
    b = np.exp(-1.0 / (1.0 - si))
    val = a / (a + b)
    return np.where(inside, val, np.where(sr >= 1.0, 1.0 + 0.0 * s, 0.0 * s))


def norm(x):
    """Euclidean norm over the last axis without conj/abs (complex-step safe)."""
    return np.sqrt(np.sum(x * x, axis=-1))


def rho_profile(r):
    """Boundary defining function as a function of |x|.

    1/r for r >= 1, constant 1 for r <= 1/2, quintic Hermite blend between
    matching value, slope and curvature at both ends.
    """
    r = np.asarray(r)
    rr = np.real(r)
    # blend on [1/2, 1] in s = (r - 1/2)/(1/2)
    s = 2.0 * (r - 0.5)
    # Hermite data at s=0: (1, 0, 0); at s=1: (1, -1/2, 1/2) in s-derivatives
    # (d/dr = 2 d/ds, so slope -1 -> -1/2 and second derivative 2 -> 1/2)
    p1, d1, dd1 = 1.0, -0.5, 0.5
    # quintic with zero data at 0: a3 s^3 + a4 s^4 + a5 s^5
    # solve for value p1-1, slope d1, curvature dd1 at s=1
    a3, a4, a5 = _QUINTIC @ np.array([p1 - 1.0, d1, dd1])
    blend = 1.0 + a3 * s**3 + a4 * s**4 + a5 * s**5
    with np.errstate(divide="ignore", invalid="ignore"):
        outer = 1.0 / r
    return np.where(rr >= 1.0, outer, np.where(rr <= 0.5, 1.0 + 0.0 * r, blend))


# rows: value, slope, curvature of s^3, s^4, s^5 at s=1
_QUINTIC = np.linalg.inv(np.array([[1.0, 1.0, 1.0], [3.0, 4.0, 5.0], [6.0, 12.0, 20.0]]))


def complex_step_jacobian(f, x, *args):
    """Derivative of f along each coordinate of x (last axis).

    Returns array with a new axis inserted right after the batch axes of the
    output: df[..., k, <out>] = d f / d x_k.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    outs = []
    for k in range(n):
        xc = x.astype(complex)
        xc[..., k] += 1j * CSTEP
        outs.append(np.imag(f(xc, *args)) / CSTEP)
    return np.stack(outs, axis=x.ndim - 1)


def fit_power_law(x, y):
    """Least-squares fit log|y| = p log x + log C. Returns (p, C, rms residual)."""
    x = np.asarray(x, dtype=float)
    y = np.abs(np.asarray(y, dtype=float))
    lx, ly = np.log(x), np.log(y)
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ coef
    return float(coef[0]), float(np.exp(coef[1])), float(np.sqrt(np.mean(resid**2)))


def gauss_legendre_panels(breaks, nodes_per_panel):
    """Composite Gauss-Legendre nodes and weights over consecutive break points."""
    xg, wg = np.polynomial.legendre.leggauss(nodes_per_panel)
    xs, ws = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        xs.append(0.5 * (b - a) * xg + 0.5 * (b + a))
        ws.append(0.5 * (b - a) * wg)
    return np.concatenate(xs), np.concatenate(ws)


def orthonormal_complement(v):
    """Orthonormal basis (rows) of the Euclidean complement of unit vector v."""
    v = np.asarray(v, dtype=float)
    n = v.size
    q, _ = np.linalg.qr(np.column_stack([v, np.eye(n)]))
    basis = q[:, 1:n].T
    return basis
