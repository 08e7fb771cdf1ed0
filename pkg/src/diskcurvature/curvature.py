"""Curvature data on the disk: interior curvature ``K``, boundary curvature ``h``,
symmetry groups, the deficit ``h / sqrt|K|`` and hypothesis checks.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Union

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateCurvature, NonPositiveLambda, ResolutionNotDivisible, ShapeMismatch
from .grid import BoundaryField, ScalarField


# ---------------------------------------------------------------------------
# Symmetry groups
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Cyclic:
    """Rotations by multiples of ``2 pi / k``."""

    k: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 2:
            raise ValueError(f"Cyclic group needs integer k >= 2, got {self.k}")


@dataclass(frozen=True)
class FullRotation:
    """All rotations (radial functions)."""


@dataclass(frozen=True)
class Trivial:
    """No symmetry imposed."""


SymmetryGroup = Union[Cyclic, FullRotation, Trivial]


def _period(n_theta, group):
    """Number of independent angular nodes per ring under ``group``."""
    if isinstance(group, Trivial):
        return n_theta
    if isinstance(group, FullRotation):
        return 1
    if n_theta % group.k:
        raise ResolutionNotDivisible(f"n_theta={n_theta} is not divisible by k={group.k}")
    return n_theta // group.k


def symmetrize(f, group):
    """Group-average projection of a scalar or boundary field."""
    data = f.data
    n_theta = f.grid.n_theta
    p = _period(n_theta, group)
    if p == n_theta:
        return f
    lead = data.shape[:-1]
    avg = data.reshape(*lead, n_theta // p, p).mean(axis=-2)
    return type(f)(f.grid, np.tile(avg, n_theta // p))


@lru_cache(maxsize=32)
def extension_matrix(grid, group):
    """Sparse 0/1 matrix ``E`` mapping reduced G-symmetric unknowns to nodal values.

    Reduced unknowns are the nodes of one fundamental sector, ordered ring by
    ring.  ``E.T @ E`` is diagonal and ``E @ (E.T E)^-1 @ E.T`` is
    :func:`symmetrize` on flattened fields.
    """
    nr, nt = grid.shape
    p = _period(nt, group)
    rows = np.arange(grid.size)
    j, i = np.divmod(rows, nt)
    cols = j * p + i % p
    return sp.csr_matrix((np.ones(grid.size), (rows, cols)), shape=(grid.size, nr * p))


def is_symmetric(f, group, tol=1e-10):
    return float(np.max(np.abs(symmetrize(f, group).data - f.data))) <= tol * max(1.0, f.max_abs())


# ---------------------------------------------------------------------------
# Curvature definitions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Constant:
    value: float

    def evaluate(self, grid, boundary=False):
        if boundary:
            return BoundaryField(grid, np.full(grid.n_theta, float(self.value)))
        return ScalarField(grid, np.full(grid.shape, float(self.value)))

    def modes(self):
        return {0} if self.value else set()


@dataclass(frozen=True)
class RadialPolynomial:
    """``K(r) = sum_m coeffs[m] * r**(2m)``."""

    coeffs: tuple

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        if not self.coeffs:
            raise ValueError("RadialPolynomial needs at least one coefficient")

    def __call__(self, r):
        return np.polynomial.polynomial.polyval(np.asarray(r, dtype=float) ** 2, self.coeffs)

    def derivative(self, r):
        r = np.asarray(r, dtype=float)
        d = np.polynomial.polynomial.polyder(self.coeffs)
        return 2.0 * r * np.polynomial.polynomial.polyval(r**2, d) if len(d) else 0.0 * r

    def evaluate(self, grid, boundary=False):
        return grid.polar_field(lambda r, t: self(r))


@dataclass(frozen=True)
class FourierCosSin:
    """``h(theta) = sum_m c_m cos(m theta) + s_m sin(m theta)``; mode 0 is taken as is."""

    modes_: dict = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for m, cs in dict(self.modes_).items():
            m = int(m)
            if m < 0:
                raise ValueError(f"negative Fourier mode {m}")
            c, s = (cs, 0.0) if np.isscalar(cs) else cs
            clean[m] = (float(c), float(s))
        object.__setattr__(self, "modes_", clean)

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        out = np.zeros_like(theta)
        for m, (c, s) in sorted(self.modes_.items()):
            out = out + c * np.cos(m * theta) + s * np.sin(m * theta)
        return out

    def evaluate(self, grid, boundary=True):
        return grid.boundary_field(self)

    def modes(self):
        return {m for m, (c, s) in self.modes_.items() if c or s}


@dataclass(frozen=True, eq=False)
class Tabulated:
    """Curvature given by nodal values on one specific grid."""

    values: Union[ScalarField, BoundaryField]

    def evaluate(self, grid, boundary=False):
        if self.values.grid != grid:
            raise ShapeMismatch(
                f"tabulated data lives on {self.values.grid.n_r}x{self.values.grid.n_theta}, "
                f"solver grid is {grid.n_r}x{grid.n_theta}"
            )
        return self.values


KDef = Union[Constant, RadialPolynomial, Tabulated]
HDef = Union[Constant, FourierCosSin, Tabulated]


@dataclass(frozen=True, eq=False)
class CurvatureSpec:
    K: KDef
    h: HDef
    group: SymmetryGroup = field(default_factory=Trivial)

    def __post_init__(self):
        g = self.group
        if isinstance(g, FullRotation):
            if isinstance(self.K, Tabulated):
                if not is_symmetric(self.K.values, g, 1e-12):
                    raise ValueError("FullRotation needs radial K")
            if isinstance(self.h, Tabulated):
                if not is_symmetric(self.h.values, g, 1e-12):
                    raise ValueError("FullRotation needs constant h")
            elif self.h.modes() - {0}:
                raise ValueError("FullRotation needs h with mode 0 only")
        elif isinstance(g, Cyclic):
            for d in (self.K, self.h):
                if isinstance(d, Tabulated):
                    if not is_symmetric(d.values, g, 1e-12):
                        raise ValueError(f"tabulated curvature is not invariant under Cyclic({g.k})")
            if isinstance(self.h, FourierCosSin):
                bad = sorted(m for m in self.h.modes() if m % g.k)
                if bad:
                    raise ValueError(f"h has Fourier modes {bad} not divisible by k={g.k}")

    def evaluate(self, grid):
        return eval_curvatures(self, grid)


def eval_curvatures(spec, grid):
    """Nodal ``(K, h)`` for ``spec`` on ``grid``."""
    K = spec.K.evaluate(grid, boundary=False)
    h = spec.h.evaluate(grid, boundary=True)
    if not isinstance(K, ScalarField):
        raise ShapeMismatch("interior curvature must be a ScalarField")
    if not isinstance(h, BoundaryField):
        raise ShapeMismatch("boundary curvature must be a BoundaryField")
    if isinstance(spec.group, Cyclic):
        _period(grid.n_theta, spec.group)
    return K, h


# ---------------------------------------------------------------------------
# Deficit and hypotheses
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DeficitProfile:
    values: BoundaryField
    tangential_derivative: BoundaryField

    @property
    def theta(self):
        return self.values.grid.theta


def spectral_derivative(f):
    """d/dtheta of a periodic boundary field by FFT (Nyquist mode dropped)."""
    n = f.data.size
    coef = np.fft.rfft(f.data)
    m = np.arange(coef.size)
    coef = 1j * m * coef
    if n % 2 == 0:
        coef[-1] = 0.0
    return BoundaryField(f.grid, np.fft.irfft(coef, n))


def deficit(K, h):
    """``D = h / sqrt|K|`` on the boundary and its tangential derivative."""
    kb = K.boundary.data
    if np.any(kb >= 0):
        bad = np.flatnonzero(kb >= 0)
        raise DegenerateCurvature(f"K >= 0 at {bad.size} boundary node(s), first at theta={h.grid.theta[bad[0]]:.6g}")
    vals = BoundaryField(h.grid, h.data / np.sqrt(-kb))
    return DeficitProfile(vals, spectral_derivative(vals))


def default_tol(D):
    return 1e-6 * (1.0 + float(np.max(np.abs(D.values.data))))


def near_one_crossings(D, tol, tol_d):
    """Angles where ``D = 1`` within ``tol`` and ``D_tau`` vanishes within ``tol_d``.

    Returns ``(near_one, degenerate)``: every node in the band ``|D - 1| <= tol``
    plus linearly interpolated sign changes of ``D - 1`` between nodes, and the
    subset of those where ``|D_tau| <= tol_d``.
    """
    theta = D.theta
    d = D.values.data - 1.0
    dt = D.tangential_derivative.data
    near, degen = [], []
    for i in np.flatnonzero(np.abs(d) <= tol):
        near.append(float(theta[i]))
        if abs(dt[i]) <= tol_d:
            degen.append(float(theta[i]))
    n = d.size
    step = D.values.grid.dtheta
    for i in range(n):
        j = (i + 1) % n
        if abs(d[i]) <= tol or abs(d[j]) <= tol or d[i] * d[j] > 0:
            continue
        s = d[i] / (d[i] - d[j])
        ang = float((theta[i] + s * step) % (2 * np.pi))
        near.append(ang)
        if abs((1 - s) * dt[i] + s * dt[j]) <= tol_d:
            degen.append(ang)
    return sorted(near), sorted(degen)


@dataclass(frozen=True)
class HypothesisReport:
    H1: bool
    H1_boundary_annulus: bool
    H2: bool
    H3: bool
    G_sym: object
    max_deficit: float
    near_one: list
    h3_violations: list
    tol: float

    def as_dict(self):
        return {
            "H1": self.H1,
            "H1_boundary_annulus": self.H1_boundary_annulus,
            "H2": self.H2,
            "H3": self.H3,
            "G_sym": self.G_sym,
            "max_deficit": self.max_deficit,
            "near_one": self.near_one,
            "h3_violations": self.h3_violations,
            "tol": self.tol,
        }


def check_hypotheses(spec, grid, tol=None, annulus=0.1):
    """Evaluate the sign, deficit and symmetry hypotheses on ``grid``.

    ``H1`` asks for ``K <= 0`` everywhere with ``K < 0`` on the boundary;
    ``H1_boundary_annulus`` only asks for ``K < 0`` on ``r >= 1 - annulus``.
    ``G_sym`` is ``None`` for the trivial group.
    """
    K, h = eval_curvatures(spec, grid)
    kb = K.boundary.data
    H1 = bool(np.all(K.data <= 0) and np.all(kb < 0))
    H1_ann = bool(np.all(K.data[grid.r >= 1 - annulus - 1e-12] < 0))
    if isinstance(spec.group, Trivial):
        G_sym = None
    else:
        G_sym = bool(is_symmetric(K, spec.group) and is_symmetric(h, spec.group))
    if np.any(kb >= 0):
        return HypothesisReport(H1, H1_ann, False, False, G_sym, float("nan"), [], [], float("nan"))
    D = deficit(K, h)
    if tol is None:
        tol = default_tol(D)
    near, degen = near_one_crossings(D, tol, tol)
    dmax = float(np.max(D.values.data))
    return HypothesisReport(H1, H1_ann, dmax > 1.0 + tol, not degen, G_sym, dmax, near, degen, tol)


# ---------------------------------------------------------------------------
# Scaling
# ---------------------------------------------------------------------------

def rescale_curvatures(K, h, lam):
    """``(lam**2 K, lam h)``: curvatures of the metric ``e^(u - 2 log lam)``."""
    if not lam > 0:
        raise NonPositiveLambda(f"scale factor must be positive, got {lam}")
    return K * (lam * lam), h * lam


# ---------------------------------------------------------------------------
# Tabulated data from CSV
# ---------------------------------------------------------------------------

def _match(values, nodes, what, atol=1e-9):
    idx = np.rint(values).astype(int)
    if np.any(np.abs(values - idx) > atol) or np.any(idx < 0) or np.any(idx >= nodes):
        raise ShapeMismatch(f"{what} values do not sit on grid nodes")
    return idx


def read_tabulated_csv(path, grid):
    """Read ``theta,value`` rows (boundary) or ``r,theta,value`` rows (interior).

    Every node of the grid must appear exactly once; no interpolation is done.
    """
    with open(Path(path), newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and not row[0].lstrip().startswith("#")]
    try:
        float(rows[0][0])
    except (ValueError, IndexError):
        rows = rows[1:]
    data = np.array(rows, dtype=float)
    if data.ndim != 2 or data.shape[1] not in (2, 3):
        raise ShapeMismatch(f"{path}: expected 2 or 3 columns")
    it = _match(data[:, -2] / grid.dtheta, grid.n_theta, "theta")
    if data.shape[1] == 2:
        out = np.full(grid.n_theta, np.nan)
        out[it] = data[:, 1]
        kind = BoundaryField
    else:
        jr = _match(data[:, 0] * grid.n_r - 1, grid.n_r, "r")
        out = np.full(grid.shape, np.nan)
        out[jr, it] = data[:, 2]
        kind = ScalarField
    if len(data) != out.size or np.isnan(out).any():
        raise ShapeMismatch(f"{path}: {len(data)} rows do not cover the {out.size} grid nodes")
    return kind(grid, out)
