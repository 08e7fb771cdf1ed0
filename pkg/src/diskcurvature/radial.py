"""Radially symmetric solutions: shooting for the radial ODE, the energy
identity obtained by multiplying the equation by ``u'``, and the exact
constant-curvature family.

For radial data the problem reduces to

    u'' + u'/r = 2 Kt(r) - 2 Ke(r) e^u,   u'(0) = 0,
    u'(1) + 2 ht = 2 he e^(u(1)/2),

which is solved by shooting on ``a = u(0)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .curvature import Constant, FourierCosSin, RadialPolynomial
from .errors import DeficitNotAboveOne, DegenerateCurvature, NegativeEps
from .grid import ScalarField

BLOWUP_CLAMP = 500.0
_EXP_CAP = 600.0


@dataclass(frozen=True)
class RadialCoeffs:
    """Radial curvature ``K(r)`` (a polynomial in ``r**2``), ``h`` at ``r = 1`` and ``eps``."""

    K: RadialPolynomial
    h1: float
    eps: float = 0.0

    def __post_init__(self):
        if self.eps < 0:
            raise NegativeEps(f"eps must be >= 0, got {self.eps}")

    @property
    def scale(self):
        return 1.0 + 2.0 * self.eps

    # K <= 0, so -eps|K|/(2s) = eps K/(2s) and -|K|(1+eps/2)/s = K(1+eps/2)/s
    def Kt(self, r):
        return self.eps * self.K(r) / (2.0 * self.scale)

    def Ke(self, r):
        return (1.0 + self.eps / 2.0) * self.K(r) / self.scale

    def Ke_prime(self, r):
        return (1.0 + self.eps / 2.0) * self.K.derivative(r) / self.scale

    @property
    def ht(self):
        return 1.0 / self.scale

    @property
    def he(self):
        return self.h1 / self.scale

    @property
    def chi(self):
        # 2 pi int_0^1 Kt r dr + 2 pi ht, with Kt a polynomial in s = r^2
        c = np.asarray(self.K.coeffs) * self.eps / (2.0 * self.scale)
        return 2.0 * math.pi * (float(np.sum(c / (2.0 * (np.arange(c.size) + 1)))) + self.ht)


def radial_coeffs(K, h1, eps=0.0):
    """Build :class:`RadialCoeffs` from a number or :class:`RadialPolynomial` for ``K``."""
    if isinstance(K, Constant):
        K = K.value
    if not isinstance(K, RadialPolynomial):
        K = RadialPolynomial((float(K),))
    rr = np.linspace(0.0, 1.0, 257)
    if np.any(K(rr) > 0) or K(1.0) >= 0:
        raise DegenerateCurvature("radial reduction needs K <= 0 with K(1) < 0")
    return RadialCoeffs(K, float(h1), float(eps))


def radial_coeffs_from_spec(spec, eps=0.0):
    """Radial coefficients for a rotation-invariant :class:`CurvatureSpec`."""
    h = spec.h
    if isinstance(h, Constant):
        h1 = h.value
    elif isinstance(h, FourierCosSin) and not (h.modes() - {0}):
        h1 = h.modes_.get(0, (0.0, 0.0))[0]
    else:
        raise ValueError("radial reduction needs a constant boundary curvature")
    if not isinstance(spec.K, (Constant, RadialPolynomial)):
        raise ValueError("radial reduction needs a constant or radial-polynomial K")
    return radial_coeffs(spec.K, h1, eps)


@dataclass(frozen=True)
class RadialProfile:
    r_nodes: np.ndarray
    u: np.ndarray
    u_prime: np.ndarray
    a: float
    coeffs: RadialCoeffs

    def to_field(self, grid):
        """Radially constant field on ``grid`` (cubic interpolation in ``r``)."""
        r = np.concatenate([[0.0], self.r_nodes])
        u = np.concatenate([[self.a], self.u])
        vals = CubicSpline(r, u)(grid.r)
        return ScalarField(grid, np.repeat(vals[:, None], grid.n_theta, axis=1))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "u", "u_prime"])
            w.writerow([0.0, repr(self.a), 0.0])
            for row in zip(self.r_nodes, self.u, self.u_prime):
                w.writerow([repr(float(x)) for x in row])


@dataclass(frozen=True)
class ShootResult:
    a: float
    u1: float
    up1: float
    mismatch: float
    blowup_radius: float | None
    profile: RadialProfile | None


def _integrate(a, rc, n_steps, keep=False):
    """RK4 from the pole for an array of shooting values ``a``.

    The first node ``r = dr`` is taken from the regular expansion
    ``u = a + c1 r^2 + c2 r^4``; RK4 runs from there to ``r = 1``.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    dr = 1.0 / n_steps
    K0, K1 = rc.K.coeffs[0], (rc.K.coeffs[1] if len(rc.K.coeffs) > 1 else 0.0)
    s, e = rc.scale, rc.eps
    kt0, kt1 = e * K0 / (2 * s), e * K1 / (2 * s)
    ke0, ke1 = (1 + e / 2) * K0 / s, (1 + e / 2) * K1 / s
    ea = np.exp(np.minimum(a, _EXP_CAP))
    c1 = (2 * kt0 - 2 * ke0 * ea) / 4.0
    c2 = (2 * kt1 - 2 * ke1 * ea - 2 * ke0 * ea * c1) / 16.0
    u = a + c1 * dr**2 + c2 * dr**4
    p = 2 * c1 * dr + 4 * c2 * dr**3

    r_all = dr * np.arange(n_steps + 1)
    half = r_all[:-1] + dr / 2
    kt_n, ke_n = rc.Kt(r_all), rc.Ke(r_all)
    kt_h, ke_h = rc.Kt(half), rc.Ke(half)

    alive = np.ones(a.shape, dtype=bool)
    blow = np.full(a.shape, np.nan)
    if keep:
        U = np.empty((n_steps, a.size))
        P = np.empty((n_steps, a.size))
        U[0], P[0] = u, p

    def rhs(r, kt, ke, uu, pp):
        return pp, 2 * kt - 2 * ke * np.exp(np.minimum(uu, _EXP_CAP)) - pp / r

    for k in range(1, n_steps):
        r = r_all[k]
        du1, dp1 = rhs(r, kt_n[k], ke_n[k], u, p)
        du2, dp2 = rhs(half[k], kt_h[k], ke_h[k], u + dr / 2 * du1, p + dr / 2 * dp1)
        du3, dp3 = rhs(half[k], kt_h[k], ke_h[k], u + dr / 2 * du2, p + dr / 2 * dp2)
        du4, dp4 = rhs(r_all[k + 1], kt_n[k + 1], ke_n[k + 1], u + dr * du3, p + dr * dp3)
        u = u + dr / 6 * (du1 + 2 * du2 + 2 * du3 + du4)
        p = p + dr / 6 * (dp1 + 2 * dp2 + 2 * dp3 + dp4)
        bad = alive & ~(u < BLOWUP_CLAMP)
        if bad.any():
            blow[bad] = r_all[k + 1]
            alive &= ~bad
            u = np.where(alive, u, BLOWUP_CLAMP)
            p = np.where(alive, p, 0.0)
        if keep:
            U[k], P[k] = u, p
    F = p + 2 * rc.ht - 2 * rc.he * np.exp(np.minimum(u / 2, _EXP_CAP))
    F = np.where(alive, F, np.inf)
    if keep:
        return u, p, F, blow, r_all[1:], U, P
    return u, p, F, blow


def _mismatch_scalar(a, rc, n_steps):
    # same scheme as _integrate, plain floats: much faster for a single shot
    dr = 1.0 / n_steps
    r_all = (dr * np.arange(n_steps + 1)).tolist()
    half = [r + dr / 2 for r in r_all[:-1]]
    ktn, ken = rc.Kt(np.array(r_all)).tolist(), rc.Ke(np.array(r_all)).tolist()
    kth, keh = rc.Kt(np.array(half)).tolist(), rc.Ke(np.array(half)).tolist()
    K0 = rc.K.coeffs[0]
    K1 = rc.K.coeffs[1] if len(rc.K.coeffs) > 1 else 0.0
    s, e = rc.scale, rc.eps
    ea = math.exp(min(a, _EXP_CAP))
    c1 = (2 * e * K0 / (2 * s) - 2 * (1 + e / 2) * K0 / s * ea) / 4.0
    c2 = (2 * e * K1 / (2 * s) - 2 * (1 + e / 2) * K1 / s * ea - 2 * (1 + e / 2) * K0 / s * ea * c1) / 16.0
    u = a + c1 * dr**2 + c2 * dr**4
    p = 2 * c1 * dr + 4 * c2 * dr**3
    exp = math.exp
    for k in range(1, n_steps):
        r, rh, r1 = r_all[k], half[k], r_all[k + 1]
        a1, b1, a2, b2 = ktn[k], ken[k], kth[k], keh[k]
        du1 = p
        dp1 = 2 * a1 - 2 * b1 * exp(min(u, _EXP_CAP)) - p / r
        uu, pp = u + dr / 2 * du1, p + dr / 2 * dp1
        du2 = pp
        dp2 = 2 * a2 - 2 * b2 * exp(min(uu, _EXP_CAP)) - pp / rh
        uu, pp = u + dr / 2 * du2, p + dr / 2 * dp2
        du3 = pp
        dp3 = 2 * a2 - 2 * b2 * exp(min(uu, _EXP_CAP)) - pp / rh
        uu, pp = u + dr * du3, p + dr * dp3
        du4 = pp
        dp4 = 2 * ktn[k + 1] - 2 * ken[k + 1] * exp(min(uu, _EXP_CAP)) - pp / r1
        u = u + dr / 6 * (du1 + 2 * du2 + 2 * du3 + du4)
        p = p + dr / 6 * (dp1 + 2 * dp2 + 2 * dp3 + dp4)
        if not u < BLOWUP_CLAMP:
            return math.inf
    return p + 2 * rc.ht - 2 * rc.he * math.exp(min(u / 2, _EXP_CAP))


def shoot(a, rc, n_steps=4096):
    """Integrate from ``u(0) = a``, ``u'(0) = 0`` to ``r = 1``.

    Returns a :class:`ShootResult` whose ``mismatch`` is
    ``u'(1) + 2 ht - 2 he e^(u(1)/2)``; if ``u`` passes the clamp (500)
    before ``r = 1`` the mismatch is ``+inf`` and ``blowup_radius`` is set.
    """
    if n_steps < 64:
        raise ValueError(f"n_steps must be >= 64, got {n_steps}")
    u, p, F, blow, r, U, P = _integrate(a, rc, n_steps, keep=True)
    if np.isnan(blow[0]):
        prof = RadialProfile(r, U[:, 0].copy(), P[:, 0].copy(), float(a), rc)
        return ShootResult(float(a), float(u[0]), float(p[0]), float(F[0]), None, prof)
    return ShootResult(float(a), math.inf, math.inf, math.inf, float(blow[0]), None)


def mismatch(a, rc, n_steps=4096):
    """Vectorized mismatch ``F(a)`` (``+inf`` where the shot blows up)."""
    return _integrate(a, rc, n_steps)[2]


@dataclass(frozen=True)
class MismatchScan:
    a: np.ndarray
    F: np.ndarray
    blowup_radius: np.ndarray

    @property
    def min_F(self):
        return float(np.min(self.F))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["a", "F", "blowup_radius"])
            for a, F, b in zip(self.a, self.F, self.blowup_radius):
                w.writerow([repr(float(a)), repr(float(F)), "" if np.isnan(b) else repr(float(b))])


def default_bracket():
    return (-20.0, 2.0 * math.log(2.0) + 2.0)


def mismatch_scan(rc, bracket=None, n_scan=200, n_steps=4096):
    lo, hi = bracket or default_bracket()
    a = np.linspace(lo, hi, n_scan)
    _, _, F, blow = _integrate(a, rc, n_steps)
    return MismatchScan(a, F, blow)


def solve_radial(rc, bracket=None, n_scan=200, n_steps=4096, tol=1e-10):
    """All roots of ``F`` found by scanning ``bracket`` and refining sign changes.

    Returns a list of :class:`RadialProfile`, sorted by ``a``.  An empty list
    means no sign change was found.
    """
    lo, hi = bracket or default_bracket()
    if not lo < hi:
        raise ValueError(f"empty bracket ({lo}, {hi})")
    scan = mismatch_scan(rc, (lo, hi), n_scan, n_steps)
    a, F = scan.a, scan.F
    out = []
    f = lambda x: _mismatch_scalar(float(x), rc, n_steps)
    for i in range(len(a) - 1):
        if not (np.isfinite(F[i]) and np.isfinite(F[i + 1])):
            continue
        if F[i] == 0.0:
            root = a[i]
        elif F[i] * F[i + 1] < 0:
            root = brentq(f, a[i], a[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        else:
            continue
        res = shoot(root, rc, n_steps)
        if abs(res.mismatch) <= max(tol, 1e3 * np.finfo(float).eps * abs(res.up1)):
            out.append(res.profile)
    if np.isfinite(F[-1]) and F[-1] == 0.0:
        out.append(shoot(a[-1], rc, n_steps).profile)
    return out


def _with_pole(p):
    r = np.concatenate([[0.0], p.r_nodes])
    return r, np.concatenate([[p.a], p.u]), np.concatenate([[0.0], p.u_prime])


def pohozaev_residual(p):
    """``A2 - A1`` from multiplying the radial equation by ``u'``.

    ``A1 = -2 he^2 e^u1 - 2 ht^2 + 4 he ht e^(u1/2) - int u'^2/r + int 2 Kt u'``,
    ``A2 = 2 Ke(1) e^u1 - 2 Ke(0) e^u0 - int 2 Ke' e^u``; zero for solutions.
    """
    rc = p.coeffs
    r, u, up = _with_pole(p)
    u1 = u[-1]
    q = np.zeros_like(r)
    q[1:] = up[1:] ** 2 / r[1:]
    A1 = (
        -2 * rc.he**2 * math.exp(u1)
        - 2 * rc.ht**2
        + 4 * rc.he * rc.ht * math.exp(u1 / 2)
        - simpson(q, x=r)
        + simpson(2 * rc.Kt(r) * up, x=r)
    )
    A2 = 2 * rc.Ke(1.0) * math.exp(u1) - 2 * rc.Ke(0.0) * math.exp(u[0]) - simpson(2 * rc.Ke_prime(r) * np.exp(u), x=r)
    return float(A2 - A1)


def radial_gauss_bonnet(p):
    """``2 pi int Ke e^u r dr + 2 pi he e^(u1/2) - chi``."""
    rc = p.coeffs
    r, u, _ = _with_pole(p)
    area = 2 * math.pi * simpson(rc.Ke(r) * np.exp(u) * r, x=r)
    return float(area + 2 * math.pi * rc.he * math.exp(u[-1] / 2) - rc.chi)


def hyperbolic_mu(h0):
    if not h0 > 1:
        raise DeficitNotAboveOne(f"need h0 > 1, got {h0}")
    return h0 + math.sqrt(h0 * h0 - 1.0)


def exact_hyperbolic(h0, n_steps=4096):
    """Closed-form solution for ``K = -1``, ``h = h0 > 1``.

    ``mu = h0 + sqrt(h0^2 - 1)`` and ``u = 2 log(2 mu / (mu^2 - r^2))``.
    """
    mu = hyperbolic_mu(h0)
    r = np.arange(1, n_steps + 1) / n_steps
    u = 2 * np.log(2 * mu / (mu * mu - r * r))
    up = 4 * r / (mu * mu - r * r)
    a = 2 * math.log(2 / mu)
    return mu, RadialProfile(r, u, up, a, radial_coeffs(-1.0, h0, 0.0))
