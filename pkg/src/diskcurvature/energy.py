"""Energy functionals, the perturbed family ``I_eps = I + eps J``, residuals and
second variation.

All discrete quantities are built from one discrete functional: the
Dirichlet term is the finite-volume form of :mod:`.grid` and the remaining
terms use the same cell areas.  With that choice the residual is exactly the
gradient of the discrete energy divided by ``(1 + 2 eps)`` times the
quadrature weights, and Gauss-Bonnet holds exactly at discrete solutions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import CurvatureError, DegenerateCurvature, NegativeEps, ShapeMismatch
from .grid import (
    BoundaryField,
    ScalarField,
    _edge_gradient,
    _sum,
    as_boundary,
    as_scalar,
    dirichlet_form,
    dirichlet_matrix,
    integrate_boundary,
    integrate_disk,
)

EXP_CLAMP = 250.0


class ExpOverflow(CurvatureError, FloatingPointError):
    """``e^u`` left the representable range (exponent clamped at 250)."""


def clamped_exp(x):
    """``(exp(min(x, 250)), overflowed)``."""
    over = bool(np.any(x > EXP_CLAMP))
    return np.exp(np.minimum(x, EXP_CLAMP)), over


def _check(u, *others):
    for o in others:
        if o.grid != u.grid:
            raise ShapeMismatch("fields live on different grids")


# ---------------------------------------------------------------------------
# Perturbed coefficients
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PerturbedCoeffs:
    """Coefficients of ``-Lap u + 2 K_tilde = 2 K_eff e^u``,
    ``du/dnu + 2 h_tilde = 2 h_eff e^(u/2)``."""

    eps: float
    K_tilde: ScalarField
    K_eff: ScalarField
    h_tilde: float
    h_eff: BoundaryField
    K: ScalarField = None
    h: BoundaryField = None

    @property
    def grid(self):
        return self.K_eff.grid

    @property
    def scale(self):
        """``1 + 2 eps``: ratio between ``I_eps`` and the normalized functional."""
        return 1.0 + 2.0 * self.eps

    @property
    def chi(self):
        """``integral K_tilde + boundary integral h_tilde``."""
        return integrate_disk(self.K_tilde) + 2.0 * math.pi * self.h_tilde

    def printed_K_tilde(self):
        """The interior constant in the alternative convention ``|K| eps / (1 + 2 eps)``."""
        return self.K_tilde * (-2.0)

    def as_dict(self):
        return {
            "eps": self.eps,
            "h_tilde": self.h_tilde,
            "chi": self.chi,
            "K_tilde_mean": float(np.mean(self.K_tilde.data)),
            "K_tilde_alt_convention_mean": float(np.mean(self.printed_K_tilde().data)),
            "K_eff_mean": float(np.mean(self.K_eff.data)),
            "h_eff_mean": float(np.mean(self.h_eff.data)),
        }


def perturbed_coeffs(K, h, eps):
    """Euler-Lagrange coefficients of ``I + eps J`` in normalized form.

    Parameters
    ----------
    K : ScalarField
        Interior curvature, ``K <= 0``.
    h : BoundaryField
        Boundary curvature.
    eps : float
        Perturbation size, ``eps >= 0``.
    """
    if eps < 0:
        raise NegativeEps(f"eps must be >= 0, got {eps}")
    _check(K, h)
    if np.any(K.data > 0):
        raise DegenerateCurvature("perturbed family needs K <= 0")
    eps = float(eps)
    s = 1.0 + 2.0 * eps
    absK = np.abs(K.data)
    if eps == 0:
        return PerturbedCoeffs(0.0, K.grid.zeros(), K, 1.0, h, K, h)
    return PerturbedCoeffs(
        eps,
        ScalarField(K.grid, -eps * absK / (2.0 * s)),
        ScalarField(K.grid, -absK * (1.0 + eps / 2.0) / s),
        1.0 / s,
        h / s,
        K,
        h,
    )


# ---------------------------------------------------------------------------
# Discrete functional on flat arrays
# ---------------------------------------------------------------------------

class DiscreteFunctional:
    """``I_eps`` and its derivatives on flattened nodal vectors.

    ``I_eps(v) = s * [ v^T A v / 2 + sum W (2 Kt v - 2 Ke e^v)
                       + dtheta sum_bdy (2 ht v - 4 he e^(v/2)) ]``
    with ``s = 1 + 2 eps``.
    """

    def __init__(self, c):
        g = c.grid
        self.coeffs = c
        self.grid = g
        self.s = c.scale
        self.A = dirichlet_matrix(g)
        self.W = g.cell_areas().ravel()
        self.dt = g.dtheta
        self.bdy = slice(g.size - g.n_theta, g.size)
        self.Kt = c.K_tilde.data.ravel()
        self.Ke = c.K_eff.data.ravel()
        self.ht = c.h_tilde
        self.he = c.h_eff.data

    def _Av(self, v):
        return _edge_gradient(self.grid, v.reshape(self.grid.shape)).ravel()

    def value(self, v):
        ev, o1 = clamped_exp(v)
        eb, o2 = clamped_exp(v[self.bdy] / 2.0)
        if o1 or o2:
            raise ExpOverflow("exponential overflow while evaluating the energy")
        d = 0.5 * _sum(v * self._Av(v))
        area = _sum(self.W * (2.0 * self.Kt * v - 2.0 * self.Ke * ev))
        bdy = self.dt * _sum(2.0 * self.ht * v[self.bdy] - 4.0 * self.he * eb)
        return self.s * (d + area + bdy)

    def pieces(self, v):
        """Unscaled ``(Av, interior source, boundary source, overflow)``."""
        ev, o1 = clamped_exp(v)
        eb, o2 = clamped_exp(v[self.bdy] / 2.0)
        src = 2.0 * self.Kt - 2.0 * self.Ke * ev
        bsrc = 2.0 * self.ht - 2.0 * self.he * eb
        return self._Av(v), src, bsrc, o1 or o2

    def gradient(self, v):
        Av, src, bsrc, over = self.pieces(v)
        if over:
            raise ExpOverflow("exponential overflow while evaluating the gradient")
        g = Av + self.W * src
        g[self.bdy] += self.dt * bsrc
        return self.s * g

    def residual(self, v):
        """Interior rows (last ring zero) and boundary residual as arrays."""
        Av, src, bsrc, over = self.pieces(v)
        if over:
            raise ExpOverflow("exponential overflow while evaluating the residual")
        nr, nt = self.grid.shape
        interior = (Av / self.W + src).reshape(nr, nt)
        interior[-1] = 0.0
        W_b = self.W[self.bdy]
        boundary = Av[self.bdy] / self.dt + (W_b / self.dt) * src[self.bdy] + bsrc
        return interior, boundary

    def residual_norms(self, v):
        interior, boundary = self.residual(v)
        return float(np.max(np.abs(interior))), float(np.max(np.abs(boundary)))

    def residual_floor(self, v):
        """Round-off level of :meth:`residual` at ``v`` as ``(interior, boundary)``.

        Componentwise backward-error estimate ``4 eps_mach (|A| |v| + W |src|) / W``.
        Near the pole the rows divide second differences by cell areas of
        order ``dr^2 dtheta``, so this floor can exceed a fixed tolerance on
        fine grids.
        """
        if not hasattr(self, "_absA"):
            self._absA = abs(self.A).tocsr()
        ev, _ = clamped_exp(v)
        eb, _ = clamped_exp(v[self.bdy] / 2.0)
        mag = self._absA @ np.abs(v) + self.W * (2.0 * np.abs(self.Kt) + 2.0 * np.abs(self.Ke) * ev)
        u = 4.0 * np.finfo(float).eps
        nr, nt = self.grid.shape
        interior = (mag / self.W).reshape(nr, nt)[:-1]
        bmag = mag[self.bdy] / self.dt + 2.0 * abs(self.ht) + 2.0 * np.abs(self.he) * eb
        return u * float(np.max(interior)), u * float(np.max(bmag))

    def hessian(self, v):
        ev, _ = clamped_exp(v)
        eb, _ = clamped_exp(v[self.bdy] / 2.0)
        d = self.W * (-2.0 * self.Ke * ev)
        d[self.bdy] += self.dt * (-self.he * eb)
        return (self.s * (self.A + sp.diags(d))).tocsc()

    def gram(self):
        """H^1 Gram matrix ``A + diag(W)``."""
        return (self.A + sp.diags(self.W)).tocsc()


# ---------------------------------------------------------------------------
# Public functionals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnergyReport:
    I_value: float
    dirichlet: float
    area_term: float
    linear_boundary: float
    curvature_boundary: float
    overflow: bool = False

    def as_dict(self):
        return {
            "I_value": self.I_value,
            "dirichlet": self.dirichlet,
            "area_term": self.area_term,
            "linear_boundary": self.linear_boundary,
            "curvature_boundary": self.curvature_boundary,
            "overflow": self.overflow,
        }


def energy_I(u, K, h):
    """Energy split into its four terms; ``overflow`` flags a clamped exponential."""
    K = as_scalar(u.grid, K)
    h = as_boundary(u.grid, h)
    _check(u, K, h)
    eu, o1 = clamped_exp(u.data)
    eb, o2 = clamped_exp(u.boundary.data / 2.0)
    parts = (
        dirichlet_form(u),
        -2.0 * integrate_disk(ScalarField(u.grid, K.data * eu)),
        2.0 * integrate_boundary(u.boundary),
        -4.0 * integrate_boundary(BoundaryField(u.grid, h.data * eb)),
    )
    return EnergyReport(math.fsum(parts), *parts, overflow=o1 or o2)


def energy_J(u, K):
    """``integral |grad u|^2 + |K| (e^u - u)``."""
    K = as_scalar(u.grid, K)
    _check(u, K)
    eu, over = clamped_exp(u.data)
    if over:
        raise ExpOverflow("exponential overflow in J")
    return 2.0 * dirichlet_form(u) + integrate_disk(ScalarField(u.grid, np.abs(K.data) * (eu - u.data)))


def energy_eps(u, c):
    """``I_eps(u) = I(u) + eps J(u)`` evaluated through the discrete functional."""
    _check(u, c.K_eff)
    return DiscreteFunctional(c).value(u.data.ravel())


def residual(u, c):
    """Residual of the perturbed problem.

    Returns
    -------
    interior : ScalarField
        ``-Lap u + 2 K_tilde - 2 K_eff e^u``; the boundary ring is set to zero.
    boundary : BoundaryField
        Half-cell flux balance ``du/dnu + 2 h_tilde - 2 h_eff e^(u/2)`` (the
        normal derivative enters through the finite-volume boundary flux).
    """
    _check(u, c.K_eff)
    interior, boundary = DiscreteFunctional(c).residual(u.data.ravel())
    return ScalarField(u.grid, interior), BoundaryField(u.grid, boundary)


def residual_pairing(interior, boundary, v):
    """``integral interior * v + boundary integral boundary * v`` with the solver's weights."""
    g = v.grid
    W = g.cell_areas()
    return _sum(W[:-1] * interior.data[:-1] * v.data[:-1]) + g.dtheta * _sum(boundary.data * v.data[-1])


def quadratic_form_Q(u, c, psi):
    """Second variation of ``I_eps`` at ``u`` in direction ``psi``."""
    _check(u, c.K_eff, psi)
    p = psi.data.ravel()
    H = DiscreteFunctional(c).hessian(u.data.ravel())
    return float(p @ (H @ p))


def hessian_action(u, c, v):
    """``H(u) v`` reshaped as a field (unnormalized, i.e. gradient units)."""
    H = DiscreteFunctional(c).hessian(u.data.ravel())
    return ScalarField(u.grid, (H @ v.data.ravel()).reshape(u.grid.shape))
