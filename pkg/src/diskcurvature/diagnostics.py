"""Integral identities and geometric checks: Gauss-Bonnet, the boundary
Moser-Trudinger (Lebedev-Milin) gap, blow-up candidate sets on the boundary,
exact Liouville solutions and curvature of hyperbolic circles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .curvature import default_tol, near_one_crossings
from .energy import clamped_exp
from .errors import ImageLeavesDisk, OutOfRange
from .grid import BoundaryField, ScalarField, dirichlet_form, integrate_boundary, integrate_disk, laplacian


def gauss_bonnet_terms(u, K_eff, h_eff):
    """``(integral K_eff e^u, boundary integral h_eff e^(u/2))``."""
    eu, _ = clamped_exp(u.data)
    eb, _ = clamped_exp(u.boundary.data / 2.0)
    area = integrate_disk(ScalarField(u.grid, K_eff.data * eu))
    bdy = integrate_boundary(BoundaryField(u.grid, h_eff.data * eb))
    return area, bdy


def gauss_bonnet_residual(u, K_eff, h_eff, chi_target=2.0 * math.pi):
    """``integral K_eff e^u + boundary integral h_eff e^(u/2) - chi_target``."""
    area, bdy = gauss_bonnet_terms(u, K_eff, h_eff)
    return math.fsum((area, bdy, -chi_target))


def lebedev_milin_gap(u):
    """``integral |grad u|^2 + 4 boundary integral u - 16 pi log(mean of e^(u/2) on the circle)``.

    Non-negative for every ``u`` (up to discretization error), zero for constants.
    """
    eb, _ = clamped_exp(u.boundary.data / 2.0)
    mean = integrate_boundary(BoundaryField(u.grid, eb)) / (2.0 * math.pi)
    rhs = 2.0 * dirichlet_form(u) + 4.0 * integrate_boundary(u.boundary)
    return rhs - 16.0 * math.pi * math.log(mean)


def level_set_lower_bound(delta, max_h, c_norm=16.0 * math.pi * math.log(2.0 * math.pi)):
    """Lower bound ``8 pi log(delta) - 4 delta max_h - c_norm`` for the energy on
    ``{boundary integral e^(u/2) = delta}``.

    The sharp constant for this bound is ``8 pi log(2 pi)``; the default is
    twice that, which is still valid.
    """
    return 8.0 * math.pi * math.log(delta) - 4.0 * delta * max_h - c_norm


# ---------------------------------------------------------------------------
# Blow-up candidate sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BlowUpCandidates:
    ge_one: list
    s1_set: list
    s0_set: list
    tol: float
    tol_d: float

    @property
    def s0_empty(self):
        return not self.s0_set

    def as_dict(self):
        return {
            "ge_one": self.ge_one,
            "s1_set": self.s1_set,
            "s0_set": self.s0_set,
            "s0_empty": self.s0_empty,
            "tol": self.tol,
            "tol_d": self.tol_d,
        }


def blow_up_candidates(D, tol=None, tol_d=None):
    """Boundary angles where concentration is possible, by thresholding the deficit.

    ``ge_one``: ``D >= 1 - tol``; ``s1_set``: ``D > 1 + tol``; ``s0_set``:
    ``|D - 1| <= tol`` together with ``|D_tau| <= tol_d`` (nodes and
    interpolated crossings).  Defaults match :func:`check_hypotheses`.
    """
    if tol is None:
        tol = default_tol(D)
    if tol_d is None:
        tol_d = tol
    theta = D.theta
    d = D.values.data
    ge = [float(t) for t in theta[d >= 1 - tol]]
    s1 = [float(t) for t in theta[d > 1 + tol]]
    _, s0 = near_one_crossings(D, tol, tol_d)
    return BlowUpCandidates(ge, s1, s0, tol, tol_d)


# ---------------------------------------------------------------------------
# Liouville solutions and hyperbolic circles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MoebiusParams:
    """``g(z) = rho e^(i alpha) (z - a) / (1 - conj(a) z)``."""

    rho: float
    alpha: float = 0.0
    a: complex = 0.0

    def __call__(self, z):
        a = complex(self.a)
        return self.rho * np.exp(1j * self.alpha) * (z - a) / (1 - np.conj(a) * z)

    def derivative(self, z):
        a = complex(self.a)
        return self.rho * np.exp(1j * self.alpha) * (1 - abs(a) ** 2) / (1 - np.conj(a) * z) ** 2


def liouville_field(g, grid):
    """``log(4 |g'|^2 / (1 - |g|^2)^2)``: a metric of curvature -1 on the disk."""
    if abs(complex(g.a)) >= 1:
        raise ImageLeavesDisk(f"Moebius centre must lie inside the disk, got |a|={abs(complex(g.a))}")
    X, Y = grid.cartesian()
    z = X + 1j * Y
    w = g(z)
    gmax = max(float(np.max(np.abs(w))), abs(g.rho))
    if gmax >= 1:
        raise ImageLeavesDisk(f"max |g| = {gmax:.6g} >= 1 on the closed disk")
    return ScalarField(grid, np.log(4 * np.abs(g.derivative(z)) ** 2 / (1 - np.abs(w) ** 2) ** 2))


def liouville_residual(g, grid, r_min=0.0):
    """``max |-Lap u + 2 e^u|`` over interior rings with ``r >= r_min``."""
    u = liouville_field(g, grid)
    res = -laplacian(u).data[:-1] + 2 * np.exp(u.data[:-1])
    keep = grid.r[:-1] >= r_min
    return float(np.max(np.abs(res[keep])))


def geodesic_curvature_circle(r):
    """Geodesic curvature ``(r^2 + 1) / (2 r)`` of ``|z| = r`` in the Poincare disk (curvature -1)."""
    if not 0 < r < 1:
        raise OutOfRange(f"radius must lie in (0, 1), got {r}")
    return (r * r + 1) / (2 * r)


# ---------------------------------------------------------------------------
# chi along a family
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChiReport:
    chi: list
    eps: list
    limit: float
    nearest_lattice: float
    distance: float

    def as_dict(self):
        return {
            "chi": self.chi,
            "eps": self.eps,
            "limit": self.limit,
            "nearest_lattice": self.nearest_lattice,
            "distance": self.distance,
        }


def chi_quantization_check(records):
    """Distance of the last ``chi`` along a family to the lattice ``2 pi Z``.

    ``records`` are objects with ``chi`` and ``eps`` attributes (solution
    records or perturbed coefficients).  Purely diagnostic.
    """
    records = list(records)
    if not records:
        raise ValueError("need at least one record")
    chis = [float(r.chi) for r in records]
    eps = [float(r.eps) for r in records]
    last = chis[-1]
    j = round(last / (2 * math.pi))
    return ChiReport(chis, eps, last, 2 * math.pi * j, abs(last - 2 * math.pi * j))
