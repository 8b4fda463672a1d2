"""Symmetric tensor fields on the round sphere S^{n-1} in the embedded picture.

A rank-q field is stored as a map y -> ambient array of shape (..., n, ..., n)
(q trailing axes) whose slots are projected onto the tangent space
T_y S^{n-1} = y^perp.  All first-order calculus (covariant derivative of the
round metric, symmetrized derivative D, trace, divergence D*) is done by
tangential projection of ambient directional derivatives.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ._numerics import CSTEP, norm

MAX_RANK = 3
FD_STEP = 1e-5
_LETTERS = "abcd"


def tangent_projector(y):
    """P(y) = I - y y^T / |y|^2, batched over leading axes."""
    y = np.asarray(y)
    n = y.shape[-1]
    yy = np.sum(y * y, axis=-1)[..., None, None]
    return np.eye(n) - y[..., :, None] * y[..., None, :] / yy


def project_slots(T, P, rank):
    """Apply P to each of the last `rank` axes of T."""
    trailing = T.ndim - (P.ndim - 2)
    if trailing == rank == 2:
        return P @ T @ P
    if trailing == rank == 1:
        return (P @ T[..., None])[..., 0]
    Pb = P.reshape(P.shape[:-2] + (1,) * (trailing - 1) + P.shape[-2:])
    for k in range(rank):
        Tk = np.moveaxis(T, -rank + k, -1)
        T = np.moveaxis(np.sum(Pb * Tk[..., None, :], axis=-1), -1, -rank + k)
    return T


def symmetrize(T, rank):
    """Average over permutations of the last `rank` axes."""
    if rank < 2:
        return T
    lead = T.ndim - rank
    acc = 0
    perms = list(itertools.permutations(range(rank)))
    for p in perms:
        acc = acc + np.transpose(T, tuple(range(lead)) + tuple(lead + i for i in p))
    return acc / len(perms)


@dataclass(frozen=True)
class SymTensorField:
    """A symmetric rank-q tensor field on S^{n-1}.

    `func(y)` returns the ambient array for (batched) points y; it need not be
    projected or symmetric, both are enforced by :meth:`tensor`.  When
    `complex_safe` is True, `func` must be analytic in y (no abs/conj), which
    enables complex-step derivatives; otherwise a geodesic finite difference
    with step 1e-5 is used.
    """

    rank: int
    dim: int
    func: Callable
    complex_safe: bool = True
    name: str = "field"

    def __post_init__(self):
        if not 0 <= self.rank <= MAX_RANK:
            raise ValueError(f"rank must be in 0..{MAX_RANK}, got {self.rank}")
        if self.dim < 2:
            raise ValueError("ambient dimension n must be >= 2")

    def tensor(self, y):
        y = np.asarray(y)
        T = np.asarray(self.func(y))
        if self.rank == 0:
            return T
        T = symmetrize(T, self.rank)
        return project_slots(T, tangent_projector(y), self.rank)

    def __call__(self, y, *vectors):
        """Evaluate on tangent vectors (all of the same batch shape as y)."""
        if len(vectors) != self.rank:
            raise ValueError(f"expected {self.rank} vectors, got {len(vectors)}")
        return contract(self.tensor(y), vectors)

    def covariant_derivative(self, y):
        """N[..., a, slots] = (nabla_a T)(slots), projected in every index."""
        y = np.asarray(y, dtype=float)
        n = self.dim
        P = tangent_projector(y)
        if self.complex_safe:
            grads = []
            for k in range(n):
                yc = y.astype(complex)
                yc[..., k] += 1j * CSTEP
                grads.append(np.imag(self.tensor(yc)) / CSTEP)
            G = np.stack(grads, axis=y.ndim - 1)
        else:
            G = self._fd_gradient(y, P)
        # project the derivative index
        slots = _LETTERS[1 : 1 + self.rank]
        G = np.einsum(f"...ak,...k{slots}->...a{slots}", P, G)
        return project_slots(G, P, self.rank)

    def _fd_gradient(self, y, P):
        # central differences along great circles through y in each projected
        # coordinate direction; renormalized points keep us on the sphere
        n = self.dim
        grads = []
        for k in range(n):
            d = P[..., :, k]
            dn = norm(d)[..., None]
            safe = np.where(dn > 1e-14, dn, 1.0)
            u = d / safe
            yp = y * math.cos(FD_STEP) + u * math.sin(FD_STEP)
            ym = y * math.cos(FD_STEP) - u * math.sin(FD_STEP)
            dT = (self.tensor(yp / norm(yp)[..., None]) - self.tensor(ym / norm(ym)[..., None])) / (2 * FD_STEP)
            scale = dn.reshape(dn.shape[:-1] + (1,) * self.rank) if self.rank else dn[..., 0]
            grads.append(dT * scale)
        return np.stack(grads, axis=y.ndim - 1)


def contract(T, vectors):
    """Contract the trailing slots of T with the given vectors (last slot first)."""
    out = np.asarray(T)
    for v in reversed(vectors):
        v = np.asarray(v)
        r = out.ndim - (v.ndim - 1)
        out = np.sum(out * v.reshape(v.shape[:-1] + (1,) * (r - 1) + v.shape[-1:]), axis=-1)
    return out


def sym_derivative(h: SymTensorField) -> SymTensorField:
    """D h (v_0..v_q) = sum_j (nabla_{v_j} h)(v_0..v_q without v_j)."""
    if h.rank + 1 > MAX_RANK:
        raise ValueError("symmetrized derivative would exceed the rank cap")
    q = h.rank

    def func(y):
        N = h.covariant_derivative(np.real(y)) if np.iscomplexobj(y) else h.covariant_derivative(y)
        return (q + 1) * symmetrize(N, q + 1)

    # derivative fields are evaluated through finite differences of h
    return SymTensorField(q + 1, h.dim, func, complex_safe=False, name=f"D({h.name})")


def trace(h: SymTensorField) -> SymTensorField:
    """Contraction of the first two slots with the round metric."""
    if h.rank < 2:
        raise ValueError("trace needs rank >= 2")

    def func(y):
        T = h.tensor(y)
        return np.trace(T, axis1=-h.rank, axis2=-h.rank + 1)

    return SymTensorField(h.rank - 2, h.dim, func, complex_safe=h.complex_safe, name=f"Tr({h.name})")


def divergence(h: SymTensorField) -> SymTensorField:
    """D* h = - sum_j (nabla_{e_j} h)(e_j, ...)."""
    if h.rank < 1:
        raise ValueError("divergence needs rank >= 1")

    def func(y):
        N = h.covariant_derivative(np.real(y)) if np.iscomplexobj(y) else h.covariant_derivative(y)
        # N[..., a, b, rest]; contract a with b
        return -np.trace(N, axis1=-h.rank - 1, axis2=-h.rank)

    return SymTensorField(h.rank - 1, h.dim, func, complex_safe=False, name=f"D*({h.name})")


def trace_and_divergence(h: SymTensorField):
    return trace(h), divergence(h)


def killing_energy_derivative(h: SymTensorField, y, eta_hat):
    """(1/3) (Dh)_y(eta, eta, eta) for rank-2 h; equals (nabla_eta h)(eta, eta)."""
    if h.rank != 2:
        raise ValueError("defined for rank-2 fields")
    N = h.covariant_derivative(np.asarray(y, dtype=float))
    e = np.asarray(eta_hat, dtype=float)
    return np.einsum("...abc,...a,...b,...c->...", N, e, e, e)


def homogeneous_quadratic(h: SymTensorField, y, eta):
    """1/2 h_{y/|y|}(w, w) with w = |y| P(y) eta.

    Extension of (y, eta) -> 1/2 h(eta, eta) off T*S^{n-1} that is invariant
    under eta -> eta + t y and (y, eta) -> (s y, eta / s), so its Hamiltonian
    flow on R^n x R^n preserves |y| = 1 and y . eta = 0.  Complex-safe.
    """
    ny = norm(y)
    yhat = y / ny[..., None]
    P = tangent_projector(yhat)
    w = ny[..., None] * np.einsum("...ij,...j->...i", P, eta)
    return 0.5 * np.einsum("...i,...ij,...j->...", w, h.tensor(yhat), w)


# ---------------------------------------------------------------------------
# great circles and weighted X-ray integrals


@dataclass(frozen=True)
class GreatCircle:
    y: np.ndarray
    eta_hat: np.ndarray

    @classmethod
    def from_vectors(cls, y, v):
        y = np.asarray(y, dtype=float)
        y = y / np.linalg.norm(y)
        v = np.asarray(v, dtype=float)
        v = v - (v @ y) * y
        return cls(y, v / np.linalg.norm(v))


def great_circle_point(circle: GreatCircle, s):
    """Position and unit tangent at arclength s (vectorized in s)."""
    s = np.asarray(s, dtype=float)[..., None]
    c, sn = np.cos(s), np.sin(s)
    pos = circle.y * c + circle.eta_hat * sn
    tan = -circle.y * sn + circle.eta_hat * c
    return pos, tan


def weighted_xray(f: SymTensorField, circle: GreatCircle, j: int = 0, k: int = 0, range: str = "full", N: int = 2048):
    """Integral of sin^j cos^k f(gamma; gamma', ..., gamma') over [0, pi] or [0, 2 pi]."""
    if N % 2:
        raise ValueError("grid size must be even")
    s = 2 * np.pi * np.arange(N) / N
    w = np.full(N, 2 * np.pi / N)
    if range == "half":
        s = s[: N // 2 + 1]
        w = w[: N // 2 + 1].copy()
        w[0] *= 0.5
        w[-1] *= 0.5
    elif range != "full":
        raise ValueError("range must be 'half' or 'full'")
    pos, tan = great_circle_point(circle, s)
    vals = f(pos, *([tan] * f.rank))
    weight = np.sin(s) ** j * np.cos(s) ** k
    return float(np.sum(w * weight * vals))


# ---------------------------------------------------------------------------
# built-in fields


def round_metric(n: int) -> SymTensorField:
    return SymTensorField(2, n, lambda y: tangent_projector(y), name="round_metric")


def constant_function(n: int, value: float = 1.0) -> SymTensorField:
    return SymTensorField(0, n, lambda y: value + 0.0 * y[..., 0], name="const")


def linear_function(n: int, a) -> SymTensorField:
    a = np.asarray(a, dtype=float)
    return SymTensorField(0, n, lambda y: y @ a, name="linear")


def rotation_killing(n: int, i: int, j: int, rank: int = 2) -> SymTensorField:
    """Killing field y -> J y of the rotation in the (i, j) plane (rank 1),
    or its symmetric square (rank 2, a Killing 2-tensor)."""
    J = np.zeros((n, n))
    J[i, j], J[j, i] = -1.0, 1.0
    if rank == 1:
        return SymTensorField(1, n, lambda y: y @ J.T, name=f"killing{i}{j}")
    if rank == 2:
        def func(y):
            V = y @ J.T
            return V[..., :, None] * V[..., None, :]
        return SymTensorField(2, n, func, name=f"killing{i}{j}^2")
    raise ValueError("rank must be 1 or 2")


def x1_squared_weighted(n: int) -> SymTensorField:
    """y_1^2 times the round metric: a generic non-Killing rank-2 field."""
    return SymTensorField(2, n, lambda y: (y[..., 0] ** 2)[..., None, None] * tangent_projector(y), name="x1sq_h0")


def polynomial_tensor(n: int, monomials: dict, covectors: Sequence) -> SymTensorField:
    """p(y) * Sym(c_1 (x) ... (x) c_q), tangentially projected.

    `monomials` maps exponent tuples (length n) to coefficients.
    """
    C = [np.asarray(c, dtype=float) for c in covectors]
    q = len(C)
    terms = [(np.asarray(e, dtype=int), float(c)) for e, c in monomials.items()]

    def p(y):
        acc = 0.0 * y[..., 0]
        for e, c in terms:
            acc = acc + c * np.prod(y ** e, axis=-1)
        return acc

    def func(y):
        val = p(y)
        if q == 0:
            return val
        T = C[0]
        for c in C[1:]:
            T = np.multiply.outer(T, c)
        return val.reshape(val.shape + (1,) * q) * T

    return SymTensorField(q, n, func, name="poly")


def random_polynomial_tensor(n: int, rank: int, rng, degree: int = 2, terms: int = 2) -> SymTensorField:
    """Sum of a few random polynomial-coefficient tensors (test helper)."""
    parts = []
    for _ in range(terms):
        mon = {}
        for _ in range(3):
            e = [0] * n
            for _ in range(degree):
                e[rng.integers(n)] += 1
            mon[tuple(e)] = mon.get(tuple(e), 0.0) + rng.normal()
        cov = [rng.normal(size=n) for _ in range(rank)]
        parts.append(polynomial_tensor(n, mon, cov))
    return sum_fields(parts)


def sum_fields(fields: Sequence[SymTensorField], weights=None) -> SymTensorField:
    fields = list(fields)
    if weights is None:
        weights = [1.0] * len(fields)
    rank, n = fields[0].rank, fields[0].dim
    if any(f.rank != rank or f.dim != n for f in fields):
        raise ValueError("fields must share rank and dimension")
    safe = all(f.complex_safe for f in fields)

    def func(y):
        return sum(w * f.tensor(y) for w, f in zip(weights, fields))

    return SymTensorField(rank, n, func, complex_safe=safe, name="+".join(f.name for f in fields))


def scale_field(f: SymTensorField, c: float) -> SymTensorField:
    return SymTensorField(f.rank, f.dim, lambda y: c * f.tensor(y), complex_safe=f.complex_safe, name=f"{c}*{f.name}")
