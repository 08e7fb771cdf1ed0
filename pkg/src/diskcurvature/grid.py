"""Polar grid on the closed unit disk, finite-difference operators and quadrature.

Nodes sit at ``r_j = j / n_r`` for ``j = 1..n_r`` (the pole is excluded, the
boundary circle is included) and ``theta_i = 2 pi i / n_theta``.  Field data is
stored as an ``(n_r, n_theta)`` array whose row 0 is the innermost ring.

The Dirichlet energy is discretised as an edge-based finite-volume form whose
gradient, divided by the cell areas returned by :meth:`Grid.cell_areas`, is the
usual second-order polar stencil ``u_rr + u_r / r + u_tt / r**2``.  The value
at the pole is taken to be the mean of the innermost ring, which is what makes
the stencil at ``j = 1`` the exact gradient of that form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import ShapeMismatch


@dataclass(frozen=True)
class Grid:
    n_r: int
    n_theta: int

    def __post_init__(self):
        if self.n_r < 8 or self.n_theta < 8:
            raise ValueError(f"grid needs n_r >= 8 and n_theta >= 8, got {self.n_r}x{self.n_theta}")
        if self.n_theta % 2:
            raise ValueError(f"n_theta must be even, got {self.n_theta}")

    @property
    def shape(self):
        return (self.n_r, self.n_theta)

    @property
    def size(self):
        return self.n_r * self.n_theta

    @property
    def dr(self):
        return 1.0 / self.n_r

    @property
    def dtheta(self):
        return 2.0 * np.pi / self.n_theta

    @property
    def r(self):
        return np.arange(1, self.n_r + 1) / self.n_r

    @property
    def theta(self):
        return self.dtheta * np.arange(self.n_theta)

    def mesh(self):
        """Return ``(R, T)`` arrays of shape ``grid.shape``."""
        return np.meshgrid(self.r, self.theta, indexing="ij")

    def cartesian(self):
        R, T = self.mesh()
        return R * np.cos(T), R * np.sin(T)

    def ring_weights(self):
        """Radial cell areas per unit angle.

        Ring 1 owns the disk of radius ``3 dr / 2``, interior rings own
        ``[r_j - dr/2, r_j + dr/2]`` and the boundary ring the half cell
        ``[1 - dr/2, 1]``.  They sum to exactly 1/2.
        """
        dr = self.dr
        w = self.r * dr
        w[0] = 9.0 / 8.0 * dr * dr
        w[-1] = dr / 2.0 - dr * dr / 8.0
        return w

    def angular_weights(self):
        # a_1 = r_1 dr (not the ring-1 cell area): keeps the pole stencil exact for r cos(theta).
        a = self.r * self.dr
        a[-1] = self.ring_weights()[-1]
        return a

    def cell_areas(self):
        """2D quadrature weights of shape ``grid.shape``."""
        return np.repeat((self.ring_weights() * self.dtheta)[:, None], self.n_theta, axis=1)

    def zeros(self):
        return ScalarField(self, np.zeros(self.shape))

    def field(self, fn):
        """Evaluate ``fn(x, y)`` at every node."""
        X, Y = self.cartesian()
        return ScalarField(self, np.broadcast_to(fn(X, Y), self.shape).astype(float))

    def polar_field(self, fn):
        """Evaluate ``fn(r, theta)`` at every node."""
        R, T = self.mesh()
        return ScalarField(self, np.broadcast_to(fn(R, T), self.shape).astype(float))

    def boundary_field(self, fn):
        """Evaluate ``fn(theta)`` at the boundary nodes."""
        return BoundaryField(self, np.broadcast_to(fn(self.theta), (self.n_theta,)).astype(float))


class _GridArray:
    _ndim = None

    def __init__(self, grid, data):
        data = np.array(data, dtype=float)
        expected = grid.shape if self._ndim == 2 else (grid.n_theta,)
        if data.shape != expected:
            raise ShapeMismatch(f"{type(self).__name__} expects shape {expected}, got {data.shape}")
        data.setflags(write=False)
        self.grid = grid
        self.data = data

    def _wrap(self, data):
        return type(self)(self.grid, data)

    def _other(self, other):
        if isinstance(other, _GridArray):
            if type(other) is not type(self) or other.grid != self.grid:
                raise ShapeMismatch("operands live on different grids or field types")
            return other.data
        return other

    def __add__(self, other):
        return self._wrap(self.data + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self._wrap(self.data - self._other(other))

    def __rsub__(self, other):
        return self._wrap(self._other(other) - self.data)

    def __mul__(self, other):
        return self._wrap(self.data * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._wrap(self.data / self._other(other))

    def __neg__(self):
        return self._wrap(-self.data)

    def map(self, fn):
        return self._wrap(fn(self.data))

    def max_abs(self):
        return float(np.max(np.abs(self.data)))

    def __repr__(self):
        return f"{type(self).__name__}({self.grid.n_r}x{self.grid.n_theta})"


class ScalarField(_GridArray):
    """Nodal values on the polar grid, shape ``(n_r, n_theta)``."""

    _ndim = 2

    @property
    def boundary(self):
        return BoundaryField(self.grid, self.data[-1])


class BoundaryField(_GridArray):
    """Nodal values on the boundary circle, length ``n_theta``."""

    _ndim = 1


def as_scalar(grid, value):
    if isinstance(value, ScalarField):
        if value.grid != grid:
            raise ShapeMismatch("field lives on a different grid")
        return value
    return ScalarField(grid, np.broadcast_to(np.asarray(value, dtype=float), grid.shape))


def as_boundary(grid, value):
    if isinstance(value, BoundaryField):
        if value.grid != grid:
            raise ShapeMismatch("field lives on a different grid")
        return value
    return BoundaryField(grid, np.broadcast_to(np.asarray(value, dtype=float), (grid.n_theta,)))


# ---------------------------------------------------------------------------
# Dirichlet form
# ---------------------------------------------------------------------------

@lru_cache(maxsize=16)
def dirichlet_matrix(grid):
    """Symmetric matrix ``A`` with ``D_h(u) = u^T A u / 2`` (flattened row-major).

    ``A @ 1 == 0``.  Interior rows of ``-A u / cell_areas`` reproduce the polar
    Laplacian stencil.
    """
    nr, nt = grid.shape
    dr, dt = grid.dr, grid.dtheta
    r = grid.r
    idx = np.arange(grid.size).reshape(grid.shape)

    # radial edges between ring j and j+1 (face at r_{j+1/2}), then angular edges
    face = (r[:-1] + dr / 2.0) / dr * dt
    ang = grid.angular_weights() / (r * r * dt)
    a = np.concatenate([idx[:-1].ravel(), idx.ravel()])
    b = np.concatenate([idx[1:].ravel(), np.roll(idx, -1, axis=1).ravel()])
    c = np.concatenate([np.repeat(face, nt), np.repeat(ang, nt)])
    # each edge contributes (c/2) (u_a - u_b)^2
    A = sp.coo_matrix(
        (np.concatenate([c, c, -c, -c]), (np.concatenate([a, b, a, b]), np.concatenate([a, b, b, a]))),
        shape=(grid.size, grid.size),
    ).tocsr()

    # pole edges to the ring-1 mean: (c/2) sum_i (u_i - m)^2 = (c/2) u^T (I - J/n) u
    c0 = (dr / 2.0) / dr * dt
    ring = idx[0]
    block = c0 * (np.eye(nt) - np.full((nt, nt), 1.0 / nt))
    P = sp.coo_matrix(
        (block.ravel(), (np.repeat(ring, nt), np.tile(ring, nt))), shape=(grid.size, grid.size)
    )
    return (A + P).tocsr()


def dirichlet_form(u):
    """Discrete ``(1/2) * integral |grad u|^2``."""
    v = u.data.ravel()
    return 0.5 * float(v @ (dirichlet_matrix(u.grid) @ v))


def dirichlet_gradient(u):
    """Gradient of :func:`dirichlet_form` with respect to the nodal values.

    Same as ``dirichlet_matrix @ u`` but accumulated from edge differences,
    which keeps round-off proportional to the local variation of ``u`` rather
    than to its size (this matters on the innermost ring).
    """
    return _edge_gradient(u.grid, u.data)


def _edge_gradient(grid, U):
    dr, dt = grid.dr, grid.dtheta
    r = grid.r
    out = np.zeros_like(U)
    face = ((r[:-1] + dr / 2.0) / dr * dt)[:, None]
    flux = face * (U[1:] - U[:-1])
    out[:-1] -= flux
    out[1:] += flux
    ang = (grid.angular_weights() / (r * r * dt))[:, None]
    out += ang * ((U - np.roll(U, -1, axis=1)) + (U - np.roll(U, 1, axis=1)))
    out[0] += (dt / 2.0) * (U[0] - U[0].mean())
    return out


def normal_flux(u):
    """Boundary-row gradient of the Dirichlet form per unit angle.

    Approximates ``du/dnu - (dr/2) * (Laplacian u)`` at ``r = 1``; this is the
    half-cell flux balance that the Robin condition is imposed through.
    """
    return BoundaryField(u.grid, dirichlet_gradient(u)[-1] / u.grid.dtheta)


# ---------------------------------------------------------------------------
# Differential operators
# ---------------------------------------------------------------------------

def laplacian(u):
    """Second-order polar Laplacian.

    Rows ``1..n_r-1`` use the conservative stencil (equal to the centred
    finite-difference form away from the pole); the boundary row uses a
    one-sided second-order stencil in ``r``.
    """
    g = u.grid
    out = -dirichlet_gradient(u) / g.cell_areas()
    U = u.data
    dr = g.dr
    u_rr = (2 * U[-1] - 5 * U[-2] + 4 * U[-3] - U[-4]) / dr**2
    u_r = (3 * U[-1] - 4 * U[-2] + U[-3]) / (2 * dr)
    u_tt = (np.roll(U[-1], -1) - 2 * U[-1] + np.roll(U[-1], 1)) / g.dtheta**2
    out[-1] = u_rr + u_r + u_tt
    return ScalarField(g, out)


def normal_derivative(u):
    """One-sided second-order ``du/dr`` at ``r = 1``."""
    U = u.data
    return BoundaryField(u.grid, (3 * U[-1] - 4 * U[-2] + U[-3]) / (2 * u.grid.dr))


def gradient_sq(u):
    """Pointwise ``u_r**2 + u_theta**2 / r**2`` by centred differences.

    One-sided in ``r`` at the boundary, ring-mean ghost value at the pole.
    """
    g = u.grid
    U = u.data
    dr = g.dr
    ghost = np.full((1, g.n_theta), U[0].mean())
    padded = np.vstack([ghost, U])
    u_r = np.empty_like(U)
    u_r[:-1] = (padded[2:] - padded[:-2]) / (2 * dr)
    u_r[-1] = (3 * U[-1] - 4 * U[-2] + U[-3]) / (2 * dr)
    u_t = (np.roll(U, -1, axis=1) - np.roll(U, 1, axis=1)) / (2 * g.dtheta)
    return ScalarField(g, u_r**2 + (u_t / g.r[:, None]) ** 2)


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

def _sum(values):
    # fixed-order compensated sum: bitwise reproducible
    return math.fsum(np.ravel(values).tolist())


def integrate_disk(f):
    """``integral over the disk of f``, cell-area weighted."""
    return _sum(f.data * f.grid.cell_areas())


def integrate_boundary(f):
    """Periodic trapezoid rule on the boundary circle."""
    return f.grid.dtheta * _sum(f.data)


# ---------------------------------------------------------------------------
# Snapshot files
# ---------------------------------------------------------------------------

def write_snapshot(u, path):
    """Write ``u`` as text: a header ``NR NTHETA`` then one row per radius."""
    lines = [f"{u.grid.n_r} {u.grid.n_theta}"]
    lines.extend(" ".join(f"{v:.17g}" for v in row) for row in u.data)
    Path(path).write_text("\n".join(lines) + "\n")


def read_snapshot(path):
    text = Path(path).read_text().split("\n")
    header = text[0].split()
    if len(header) != 2:
        raise ShapeMismatch(f"bad snapshot header in {path}")
    nr, nt = int(header[0]), int(header[1])
    rows = [line.split() for line in text[1:] if line.strip()]
    data = np.array(rows, dtype=float)
    if data.shape != (nr, nt):
        raise ShapeMismatch(f"snapshot {path} declares {nr}x{nt} but holds {data.shape}")
    return ScalarField(Grid(nr, nt), data)
