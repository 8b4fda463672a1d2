"""Metric models on R^n: Euclidean, smoothed 2D cones and asymptotically
Euclidean perturbations, with Christoffel symbols, curvature and decay checks.

Every model evaluates g(x) in Cartesian components, batched over leading axes
(x has shape (..., n), g has shape (..., n, n)).  Evaluators are written to be
analytic in x, so first derivatives come from the complex-step method and are
exact to roundoff.  Second derivatives (curvature) use central differences of
the Christoffel symbols.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._numerics import CSTEP, fit_power_law, norm, rho_profile, smooth_transition
from .sphere_tensors import SymTensorField, homogeneous_quadratic, tangent_projector

FD_REL_STEP = 1e-5
KINDS = ("euclidean", "cone2d", "normal_form_ae", "cartesian_ae")


class MetricModel:
    """Base class. Subclasses implement :meth:`metric` (complex-safe)."""

    kind = "abstract"

    def __init__(self, dim: int, decay_order: int = 0, params: Optional[dict] = None):
        if dim < 2:
            raise ValueError("dimension must be >= 2")
        self.dim = int(dim)
        self.decay_order = int(decay_order)
        self.params = dict(params or {})

    # -- hooks ---------------------------------------------------------
    def metric(self, x):
        raise NotImplementedError

    def inverse_metric(self, x):
        return np.linalg.inv(self.metric(x))

    def in_chart(self, x) -> bool:
        return True

    @property
    def is_asymptotically_euclidean(self) -> bool:
        return self.kind in ("euclidean", "normal_form_ae", "cartesian_ae")

    @property
    def has_compact_chart(self) -> bool:
        return False

    @property
    def euclidean_radius(self) -> float:
        """Radius inside which the metric is exactly Euclidean (0 if none)."""
        return 0.0

    @property
    def structure_radii(self) -> tuple:
        """Radii where the metric profile changes character (quadrature breaks)."""
        return ()

    def describe(self) -> dict:
        return {"kind": self.kind, "dim": self.dim, "decay_order": self.decay_order, **self.params}

    # -- derived quantities ---------------------------------------------
    def metric_derivative(self, x):
        """dg[..., k, i, j] = d g_ij / d x_k (complex step, one batched call)."""
        x = np.asarray(x, dtype=float)
        n = self.dim
        xc = np.repeat(x[None].astype(complex), n, axis=0)
        for k in range(n):
            xc[k, ..., k] += 1j * CSTEP
        vals = np.imag(self.metric(xc)) / CSTEP  # (n, ..., n, n)
        return np.moveaxis(vals, 0, -3)

    def christoffel(self, x):
        """Gamma[..., k, i, j] = Gamma^k_ij via the Koszul formula."""
        x = np.asarray(x, dtype=float)
        ginv = self.inverse_metric(x)
        dg = self.metric_derivative(x)
        # lowered: Gamma_lij = (d_i g_lj + d_j g_li - d_l g_ij) / 2
        low = 0.5 * (np.swapaxes(dg, -3, -2) + np.moveaxis(dg, -3, -1) - dg)
        return np.einsum("...kl,...lij->...kij", ginv, low)

    def riemann(self, x):
        """R[..., a, b, c, d] = R^a_bcd with R(d_c, d_d) d_b = R^a_bcd d_a."""
        x = np.asarray(x, dtype=float)
        n = self.dim
        G = self.christoffel(x)
        h = FD_REL_STEP * np.maximum(1.0, norm(x))[..., None, None, None]
        dG = np.empty(x.shape[:-1] + (n,) * 4)  # dG[..., c, a, d, b] = d_c Gamma^a_db
        for c in range(n):
            e = np.zeros(n)
            e[c] = 1.0
            hc = h[..., 0, 0, 0][..., None]
            dG[..., c, :, :, :] = (self.christoffel(x + hc * e) - self.christoffel(x - hc * e)) / (2 * h)
        term1 = np.einsum("...cadb->...abcd", dG)
        term2 = np.einsum("...dacb->...abcd", dG)
        quad1 = np.einsum("...ace,...edb->...abcd", G, G)
        quad2 = np.einsum("...ade,...ecb->...abcd", G, G)
        return term1 - term2 + quad1 - quad2

    def sectional_curvature(self, x, u, v):
        R = self.riemann(x)
        g = self.metric(np.asarray(x, dtype=float))
        Rl = np.einsum("...ae,...ebcd->...abcd", g, R)
        num = np.einsum("...abcd,...a,...b,...c,...d->...", Rl, u, v, u, v)
        guu = np.einsum("...ij,...i,...j->...", g, u, u)
        gvv = np.einsum("...ij,...i,...j->...", g, v, v)
        guv = np.einsum("...ij,...i,...j->...", g, u, v)
        return num / (guu * gvv - guv**2)

    def gaussian_curvature(self, x):
        if self.dim != 2:
            raise ValueError("Gaussian curvature is defined for dim=2")
        x = np.asarray(x, dtype=float)
        e1 = np.broadcast_to(np.array([1.0, 0.0]), x.shape)
        e2 = np.broadcast_to(np.array([0.0, 1.0]), x.shape)
        return self.sectional_curvature(x, e1, e2)


class Euclidean(MetricModel):
    kind = "euclidean"

    def metric(self, x):
        x = np.asarray(x)
        return np.broadcast_to(np.eye(self.dim), x.shape[:-1] + (self.dim, self.dim)) + 0.0 * x[..., None, :1]

    def inverse_metric(self, x):
        return self.metric(x)

    def christoffel(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (self.dim,) * 3)

    def riemann(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (self.dim,) * 4)

    @property
    def has_compact_chart(self):
        return True

    @property
    def euclidean_radius(self):
        return np.inf

    # compact-chart hooks shared with NormalFormAE
    amplitude = 0.0
    m_chart = 0

    def sphere_perturbation(self, y, eta):
        return 0.0 * np.sum(y * eta, axis=-1)


class Cone2D(MetricModel):
    """Smoothed cone: dr^2 + f(r)^2 dtheta^2.

    f'(r) moves monotonically from 1 to slope across (r0/4, r0) along a quintic
    smoothstep, so f(r) = r near the origin and f(r) = slope * r + offset for
    r >= r0.  Outside r0 the surface is an exact flat cone of total angle
    2 pi slope (apex shifted to r = -offset/slope); the curvature -f''/f has
    the sign of 1 - slope everywhere.
    """

    kind = "cone2d"

    def __init__(self, slope: float, tip_radius: float = 1.0):
        if slope <= 0 or tip_radius <= 0:
            raise ValueError("cone slope and tip radius must be positive")
        super().__init__(2, 0, {"slope": float(slope), "tip_radius": float(tip_radius)})
        self.slope = float(slope)
        self.r0 = float(tip_radius)
        self._a1 = self.r0 / 4
        self.offset = float(self._pieces(np.array(self.r0), 1)) + self.r0 - self.slope * self.r0

    @staticmethod
    def _ramp(u, order):
        # order 0: quintic smoothstep S; 1: its antiderivative; -1: S'
        ur = np.real(u)
        inside = (ur > 0) & (ur < 1)
        ui = np.where(inside, u, 0.5)
        if order == 0:
            v, lo, hi = ui**3 * (10 - 15 * ui + 6 * ui**2), 0.0 * u, 1.0 + 0.0 * u
        elif order == 1:
            v, lo, hi = ui**4 * (2.5 - 3 * ui + ui**2), 0.0 * u, u - 0.5
        else:
            v, lo, hi = 30 * ui**2 * (1 - ui) ** 2, 0.0 * u, 0.0 * u
        return np.where(inside, v, np.where(ur >= 1, hi, lo))

    def _pieces(self, r, order):
        w = self.r0 - self._a1
        u = (r - self._a1) / w
        k = self.slope - 1.0
        if order == 1:
            return k * w * self._ramp(u, 1)
        if order == 0:
            return k * self._ramp(u, 0)
        return k * self._ramp(u, -1) / w

    def warp(self, r):
        """f(r)."""
        return r + self._pieces(r, 1)

    def warp_slope(self, r):
        """f'(r)."""
        return 1.0 + self._pieces(r, 0)

    def radial_curvature(self, r):
        """Gaussian curvature K = -f''/f as a function of r."""
        r = np.asarray(r, dtype=float)
        return -self._pieces(r, -1) / self.warp(r)

    def profile(self, r):
        """c(r) = f(r)/r."""
        rs = np.where(np.real(r) > 0, r, 1.0)
        return np.where(np.real(r) > 0, self.warp(rs) / rs, 1.0 + 0.0 * r)

    def metric(self, x):
        x = np.asarray(x)
        r = norm(x)
        rs = np.where(np.real(r) > 0, r, 1.0)
        w = x / rs[..., None]
        c = self.profile(r)
        ww = w[..., :, None] * w[..., None, :]
        g = ww + (c * c)[..., None, None] * (np.eye(2) - ww)
        return np.where((np.real(r) > 0)[..., None, None], g, np.eye(2) + 0.0 * g)

    @property
    def structure_radii(self):
        return (self._a1, self.r0)


@dataclass(frozen=True)
class PerturbationSpec:
    """Leading perturbation of the dual sphere metric family.

    The dual family is h_rho^{-1} = h0^{-1} + amplitude * rho^m * h_m, switched
    on smoothly for |x| in (taper_radius, 2 * taper_radius).
    """

    m: int
    h_m: SymTensorField
    amplitude: float
    taper_radius: float = 2.5


class NormalFormAE(MetricModel):
    """g = d rho^2 / rho^4 + h_rho / rho^2 in the radial chart, rho = 1/|x|.

    In Cartesian components the dual metric is
        g^{-1}(x) = I + a chi(r) r^{-m} P H(omega) P,
    with omega = x/|x|, P = I - omega omega^T and H the ambient matrix of h_m.
    """

    kind = "normal_form_ae"

    def __init__(self, spec: PerturbationSpec):
        if spec.h_m.rank != 2:
            raise ValueError("h_m must be a rank-2 field")
        if spec.m < 1:
            raise ValueError("decay order m must be >= 1")
        super().__init__(spec.h_m.dim, spec.m, {"amplitude": spec.amplitude, "taper_radius": spec.taper_radius,
                                                "h_m": spec.h_m.name})
        self.spec = spec
        self.amplitude = float(spec.amplitude)
        self.m_chart = int(spec.m)
        self.r_in = float(spec.taper_radius)
        self._check_positive()

    def _check_positive(self):
        rng = np.random.default_rng(12345)
        y = rng.normal(size=(512, self.dim))
        y /= np.linalg.norm(y, axis=1)[:, None]
        lam = np.linalg.eigvalsh(self.spec.h_m.tensor(y))
        worst = self.amplitude * self.r_in ** (-self.m_chart) * lam
        if np.min(1.0 + worst) <= 0.05:
            raise ValueError("perturbation too large: dual metric loses positivity")

    @property
    def has_compact_chart(self):
        return True

    @property
    def euclidean_radius(self):
        return self.r_in

    @property
    def structure_radii(self):
        return (self.r_in, 2 * self.r_in)

    def taper(self, r):
        return smooth_transition((r - self.r_in) / self.r_in)

    def inverse_metric(self, x):
        x = np.asarray(x)
        r = norm(x)
        rs = np.where(np.real(r) > 0, r, 1.0)
        w = x / rs[..., None]
        H = self.spec.h_m.tensor(w)  # already projected
        coef = self.amplitude * self.taper(r) * rs ** (-self.m_chart)
        return np.eye(self.dim) + coef[..., None, None] * H

    def metric(self, x):
        return np.linalg.inv(self.inverse_metric(x))

    def sphere_perturbation(self, y, eta):
        """F_m(y, eta) = 1/2 h_m(eta, eta), extended homogeneously off the sphere."""
        return homogeneous_quadratic(self.spec.h_m, y, eta)


class CartesianAE(MetricModel):
    """g = I + chi(r) r^{-m} A(1/r, x/r) with A symmetric.

    `coefficients(s, omega)` returns A for s = 1/r; the default built from
    constant C and linear L gives A = C + L . omega.
    """

    kind = "cartesian_ae"

    def __init__(self, dim: int, m: int, coefficients: Callable, cutoff_radius: float = 2.0, label: str = "custom"):
        super().__init__(dim, m, {"cutoff_radius": cutoff_radius, "coefficients": label})
        self.coefficients = coefficients
        self.r_cut = float(cutoff_radius)

    @classmethod
    def from_arrays(cls, dim, m, C, L=None, cutoff_radius=2.0):
        C = np.asarray(C, dtype=float)
        C = 0.5 * (C + C.T)
        L = np.zeros((dim, dim, dim)) if L is None else np.asarray(L, dtype=float)
        L = 0.5 * (L + np.swapaxes(L, 0, 1))

        def coeff(s, w):
            return C + np.einsum("ijk,...k->...ij", L, w)

        return cls(dim, m, coeff, cutoff_radius, label="C+L.omega")

    @property
    def euclidean_radius(self):
        return self.r_cut

    @property
    def structure_radii(self):
        return (self.r_cut, 2 * self.r_cut)

    def metric(self, x):
        x = np.asarray(x)
        r = norm(x)
        rs = np.where(np.real(r) > 0, r, 1.0)
        w = x / rs[..., None]
        A = np.asarray(self.coefficients(1.0 / rs, w))
        A = 0.5 * (A + np.swapaxes(A, -1, -2))
        chi = smooth_transition((r - self.r_cut) / self.r_cut)
        return np.eye(self.dim) + (chi * rs ** (-self.decay_order))[..., None, None] * A


# ---------------------------------------------------------------------------
# public operations


def euclidean(n: int) -> Euclidean:
    return Euclidean(n)


def cone2d(slope: float, tip_radius: float = 1.0) -> Cone2D:
    return Cone2D(slope, tip_radius)


def normal_form_ae(spec: PerturbationSpec) -> NormalFormAE:
    return NormalFormAE(spec)


def cartesian_ae(dim, m, C=None, L=None, cutoff_radius=2.0, coefficients=None) -> CartesianAE:
    if coefficients is not None:
        return CartesianAE(dim, m, coefficients, cutoff_radius)
    return CartesianAE.from_arrays(dim, m, np.zeros((dim, dim)) if C is None else C, L, cutoff_radius)


def eval_metric(model: MetricModel, x):
    x = np.asarray(x, dtype=float)
    if not model.in_chart(x):
        raise ValueError("point outside the model's chart")
    return np.asarray(model.metric(x), dtype=float)


def christoffel(model: MetricModel, x):
    return model.christoffel(np.asarray(x, dtype=float))


def riemann(model: MetricModel, x):
    return model.riemann(np.asarray(x, dtype=float))


def boundary_defining_function(x):
    """rho(x): 1/|x| outside the unit ball, smooth positive extension inside."""
    return rho_profile(norm(np.asarray(x)))


def sphere_directions(n: int, count: int) -> np.ndarray:
    """Deterministic, roughly uniform unit vectors in R^n."""
    if n == 2:
        th = 2 * np.pi * (np.arange(count) + 0.5) / count
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    if n == 3:
        k = np.arange(count) + 0.5
        z = 1 - 2 * k / count
        phi = np.pi * (1 + 5**0.5) * k
        s = np.sqrt(1 - z * z)
        return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)
    v = np.random.default_rng(2024).normal(size=(count, n))
    return v / np.linalg.norm(v, axis=1)[:, None]


@dataclass
class DecayReport:
    radii: np.ndarray
    sup_metric: np.ndarray
    sup_christoffel: np.ndarray
    sup_curvature: np.ndarray
    sup_drho: np.ndarray
    exponents: dict
    expected: dict
    residuals: dict
    passed: dict = field(default_factory=dict)
    tolerance: float = 0.3

    @property
    def ok(self) -> bool:
        return all(self.passed.values())


def validate_decay(model: MetricModel, R0: Optional[float] = None, n_radii: int = 8, n_dirs: int = 48,
                   tolerance: float = 0.3) -> DecayReport:
    """Fit decay exponents of |g - I|, |Gamma|, |Riem| and of the unit-gradient
    defect of rho0 = 1/|x| over spheres |x| = R, R in [R0, 100 R0]."""
    if not model.is_asymptotically_euclidean:
        raise ValueError("decay validation applies to asymptotically Euclidean models")
    n, m = model.dim, model.decay_order
    if R0 is None:
        R0 = max(5.0, 4.0 * model.euclidean_radius if np.isfinite(model.euclidean_radius) else 5.0)
    radii = np.geomspace(R0, 100 * R0, n_radii)
    dirs = sphere_directions(n, n_dirs)
    sg, sG, sR, sd = [], [], [], []
    for R in radii:
        x = R * dirs
        g = model.metric(x)
        sg.append(np.max(np.linalg.norm(g - np.eye(n), axis=(-2, -1))))
        sG.append(np.max(np.sqrt(np.sum(model.christoffel(x) ** 2, axis=(-3, -2, -1)))))
        sR.append(np.max(np.sqrt(np.sum(model.riemann(x) ** 2, axis=(-4, -3, -2, -1)))))
        ginv = np.linalg.inv(g)
        sd.append(np.max(np.abs(np.sqrt(np.einsum("...i,...ij,...j->...", dirs, ginv, dirs)) - 1.0)))
    sg, sG, sR, sd = map(np.asarray, (sg, sG, sR, sd))
    expected = {"metric": -m, "christoffel": -(m + 1), "curvature": -(m + 2), "drho": -2}
    exps, res, passed = {}, {}, {}
    for key, vals in (("metric", sg), ("christoffel", sG), ("curvature", sR), ("drho", sd)):
        if np.max(vals) < 1e-14:
            # identically Euclidean at this scale
            exps[key], res[key] = -np.inf, 0.0
            passed[key] = True
            continue
        p, _, r = fit_power_law(radii, vals)
        exps[key], res[key] = p, r
        if key == "drho":
            passed[key] = p <= expected[key] + tolerance if m == 1 else True
        else:
            passed[key] = abs(p - expected[key]) <= tolerance
    return DecayReport(radii, sg, sG, sR, sd, exps, expected, res, passed, tolerance)
