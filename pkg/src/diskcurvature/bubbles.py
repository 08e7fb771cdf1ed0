"""Concentrating test functions.

Two families of hyperbolic bubbles are provided: bubbles centred at points
``q`` just outside the disk (optionally ``k`` of them placed symmetrically),
and the radial family ``2 log(2 mu / (mu^2 - |x|^2))`` that concentrates on
the whole boundary as ``mu -> 1``.  Their energy drops without bound when the
deficit exceeds one, which this module measures against closed forms.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .curvature import deficit
from .energy import energy_I
from .errors import DegenerateCurvature, MuNotAboveOne, PoleInsideClosure, UnderResolved
from .grid import BoundaryField, ScalarField, as_boundary, as_scalar, integrate_boundary

LAYER_NODES = 8


@dataclass(frozen=True)
class BubbleParams:
    """Bubble family parameters.

    ``r_off=None`` selects the radial family; otherwise ``k`` bubbles sit at
    ``(1 + r_off) e^(i (base_angle + 2 pi i / k))``.
    """

    mu: float
    r_off: float | None = None
    k: int = 1
    base_angle: float = 0.0

    def __post_init__(self):
        if self.r_off is None:
            if not self.mu > 1:
                raise MuNotAboveOne(f"radial bubble needs mu > 1, got {self.mu}")
        else:
            if not self.r_off > 0:
                raise ValueError(f"r_off must be positive, got {self.r_off}")
            if self.k < 1:
                raise ValueError(f"k must be >= 1, got {self.k}")
            if not self.mu * self.r_off > 1:
                raise PoleInsideClosure(f"mu * r_off = {self.mu * self.r_off:.6g} must exceed 1")

    @property
    def radial(self):
        return self.r_off is None

    def centres(self):
        ang = self.base_angle + 2 * math.pi * np.arange(self.k) / self.k
        return [(1 + self.r_off) * complex(math.cos(t), math.sin(t)) for t in ang]

    def layer_width(self):
        """Width of the boundary layer: ``mu^2 - 1`` or ``sqrt(mu^2 r_off^2 - 1)``."""
        if self.radial:
            return self.mu**2 - 1
        return math.sqrt((self.mu * self.r_off) ** 2 - 1)


def phi_point(mu, q, x):
    """``log(4 mu^2 / (mu^2 |x - q|^2 - 1)^2)`` at points ``x`` (complex)."""
    d2 = np.abs(np.asarray(x) - complex(q)) ** 2
    return np.log(4 * mu * mu / (mu * mu * d2 - 1) ** 2)


def bubble_phi(mu, q, grid):
    """Bubble centred at ``q`` evaluated on the grid."""
    X, Y = grid.cartesian()
    d2 = np.abs(X + 1j * Y - complex(q)) ** 2
    if np.any(mu * mu * d2 <= 1):
        raise PoleInsideClosure(f"mu^2 |x - q|^2 <= 1 at some node (mu={mu}, q={q})")
    return ScalarField(grid, np.log(4 * mu * mu / (mu * mu * d2 - 1) ** 2))


def bubble_sum_Phi(params, grid):
    """``log(sum_i e^(phi_i))`` over the ``k`` symmetric bubbles (max-shifted)."""
    if params.radial:
        raise ValueError("bubble_sum_Phi needs off-centre bubbles (r_off set)")
    phis = np.stack([bubble_phi(params.mu, q, grid).data for q in params.centres()])
    m = phis.max(axis=0)
    return ScalarField(grid, m + np.log(np.exp(phis - m).sum(axis=0)))


def radial_bubble(mu, grid):
    """``2 log(2 mu / (mu^2 - r^2))``."""
    if not mu > 1:
        raise MuNotAboveOne(f"radial bubble needs mu > 1, got {mu}")
    return grid.polar_field(lambda r, t: 2 * np.log(2 * mu / (mu * mu - r * r)))


def tilde(f, K):
    """``f - log|K|``, the same bubble for curvature ``K`` instead of -1."""
    K = as_scalar(f.grid, K)
    if np.any(K.data >= 0):
        raise DegenerateCurvature("tilde needs K < 0 on the closed disk")
    return f - np.log(-K.data)


# ---------------------------------------------------------------------------
# Closed forms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OracleReport:
    """Predicted bubble integrals.

    Radial family (exact): ``gradient`` = integral |grad phi|^2, ``area`` =
    integral e^phi, ``boundary_exp`` = boundary integral e^(phi/2),
    ``boundary_linear`` = boundary integral phi, ``C`` =
    integral_0^1 rho / (mu^2 - rho^2)^2 d rho.  ``gradient_32piC`` is
    ``32 pi C``, the value of integral 16 / (mu^2 - |x|^2)^2, which omits the
    ``|x|^2`` factor of ``|grad phi|^2`` and overestimates the gradient term.

    Off-centre family (leading terms only): gradient ``8 k pi / s``, area
    ``2 k pi mu r_off / s`` and ``D_min * 2 k pi / s`` with
    ``s = sqrt(mu^2 r_off^2 - 1)``; ``boundary_linear`` and ``C`` are None.
    """

    radial: bool
    gradient: float
    area: float
    boundary_exp: float
    boundary_deficit: float
    boundary_linear: float | None = None
    C: float | None = None
    gradient_32piC: float | None = None


def radial_C(mu):
    return 1.0 / (2.0 * mu * mu * (mu * mu - 1.0))


def appendix_oracles(params, D_min=1.0):
    mu = params.mu
    if params.radial:
        m2 = mu * mu
        C = radial_C(mu)
        bexp = 4 * math.pi * mu / (m2 - 1)
        return OracleReport(
            True,
            16 * math.pi * (1 / (m2 - 1) + math.log1p(-1 / m2)),
            4 * math.pi / (m2 - 1),
            bexp,
            D_min * bexp,
            4 * math.pi * math.log(2 * mu / (m2 - 1)),
            C,
            32 * math.pi * C,
        )
    s = params.layer_width()
    k = params.k
    return OracleReport(False, 8 * k * math.pi / s, 2 * k * math.pi * mu * params.r_off / s, 2 * k * math.pi / s, D_min * 2 * k * math.pi / s)


def radial_bubble_energy(mu, D, kappa=1.0):
    """Exact energy of the radial bubble for ``K = -kappa``, ``h = D sqrt(kappa)``.

    ``16 pi / (mu^2 - 1) + 8 pi log(2 / mu) - 16 pi D mu / (mu^2 - 1) - 4 pi log(kappa)``.
    """
    m2 = mu * mu
    return 16 * math.pi / (m2 - 1) + 8 * math.pi * math.log(2 / mu) - 16 * math.pi * D * mu / (m2 - 1) - 4 * math.pi * math.log(kappa)


# ---------------------------------------------------------------------------
# Unboundedness scan
# ---------------------------------------------------------------------------

def required_resolution(params):
    """Smallest ``(n_r, n_theta)`` putting ``LAYER_NODES`` nodes across the layer."""
    w = params.layer_width()
    n_r = math.ceil(LAYER_NODES / w)
    n_t = 8 if params.radial else 2 * math.ceil(LAYER_NODES * math.pi / w)
    return n_r, n_t


def check_resolution(params, grid):
    n_r, n_t = required_resolution(params)
    if grid.n_r < n_r or grid.n_theta < n_t:
        raise UnderResolved(
            f"mu={params.mu}: boundary layer of width {params.layer_width():.3g} needs a "
            f"{n_r}x{n_t} grid, got {grid.n_r}x{grid.n_theta}",
            required=(max(n_r, grid.n_r), max(n_t, grid.n_theta)),
        )


@dataclass(frozen=True)
class ScanRow:
    mu: float
    I: float
    dirichlet: float
    area_term: float
    linear_boundary: float
    curvature_boundary: float
    boundary_length: float
    prediction: float
    closed_form: float | None


@dataclass(frozen=True)
class ScanTable:
    rows: list
    D_min: float

    @property
    def energies(self):
        return np.array([r.I for r in self.rows])

    def write_csv(self, path):
        names = list(ScanRow.__dataclass_fields__)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            for row in self.rows:
                w.writerow(["" if getattr(row, n) is None else repr(float(getattr(row, n))) for n in names])


def bubble_field(params, grid):
    if params.radial:
        return radial_bubble(params.mu, grid)
    return bubble_sum_Phi(params, grid)


def unboundedness_scan(K, h, grid, mu_schedule, r_off=None, k=1, base_angle=0.0):
    """Energy and boundary length of ``tilde(bubble_mu)`` along ``mu_schedule``.

    ``prediction`` is the leading term ``16 pi (1 - D_min) / (mu^2 - 1)``
    (radial) or ``8 k pi (1 - D_min) / s`` (off-centre, from the one-sided
    bounds); ``closed_form`` is the exact radial energy when ``K`` and ``h``
    are constant.
    """
    K = as_scalar(grid, K)
    h = as_boundary(grid, h)
    D = deficit(K, h)
    D_min = float(np.min(D.values.data))
    const = np.ptp(K.data) == 0 and np.ptp(h.data) == 0
    rows = []
    for mu in mu_schedule:
        p = BubbleParams(mu, r_off, k, base_angle)
        check_resolution(p, grid)
        u = tilde(bubble_field(p, grid), K)
        rep = energy_I(u, K, h)
        blen = integrate_boundary(BoundaryField(grid, np.exp(u.boundary.data / 2)))
        if p.radial:
            pred = 16 * math.pi * (1 - D_min) / (mu * mu - 1)
            closed = radial_bubble_energy(mu, D_min, -float(K.data[0, 0])) if const else None
        else:
            pred = 8 * k * math.pi * (1 - D_min) / p.layer_width()
            closed = None
        rows.append(
            ScanRow(mu, rep.I_value, rep.dirichlet, rep.area_term, rep.linear_boundary, rep.curvature_boundary, blen, pred, closed)
        )
    return ScanTable(rows, D_min)


def mountain_pass_endpoint(K, h, grid, target, mu_start=2.0, shrink=0.7):
    """Radial bubble ``tilde(phi_mu)`` with energy below ``target``.

    ``mu - 1`` is shrunk geometrically from ``mu_start``; raises
    :class:`UnderResolved` if the grid cannot hold the required layer.
    """
    K = as_scalar(grid, K)
    h = as_boundary(grid, h)
    x = mu_start - 1.0
    while True:
        mu = 1.0 + x
        p = BubbleParams(mu)
        check_resolution(p, grid)
        u = tilde(radial_bubble(mu, grid), K)
        if energy_I(u, K, h).I_value < target:
            return mu, u
        x *= shrink
