"""Nonlinear solvers for the perturbed problem: damped Newton, H^1-preconditioned
gradient flow, continuation in ``eps``, a string-type mountain-pass search and
the Morse index restricted to symmetric functions.

All solvers work in the reduced coordinates of a symmetry group: nodal
values are ``E @ z`` with ``E`` from :func:`extension_matrix`, so iterates
are exactly invariant.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .bubbles import mountain_pass_endpoint, radial_bubble, tilde
from .curvature import Trivial, deficit, eval_curvatures, extension_matrix, symmetrize
from .diagnostics import gauss_bonnet_residual, level_set_lower_bound
from .energy import DiscreteFunctional, ExpOverflow, energy_I, perturbed_coeffs
from .errors import EigSolverFailure, PathCollapse, SingularJacobian
from .grid import ScalarField, write_snapshot

DEFAULT_SCHEDULE = (0.5, 0.25, 0.1, 0.04, 0.01, 0.0)


@dataclass(frozen=True)
class SolverOptions:
    """Solver settings.

    ``u_cap`` bounds ``max u`` before a run is declared blown up;
    ``energy_floor`` is the level below which a descent run is declared
    unbounded.
    """

    max_iters: int = 50
    tol_residual: float = 1e-9
    damping: float = 0.5
    eps_schedule: tuple = DEFAULT_SCHEDULE
    flow_step: float = 1.0
    group: object = field(default_factory=Trivial)
    u_cap: float = 200.0
    energy_floor: float = -1e6

    def __post_init__(self):
        if not self.tol_residual > 0:
            raise ValueError("tol_residual must be positive")
        if not 0 < self.damping < 1:
            raise ValueError("damping must lie in (0, 1)")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if not self.flow_step > 0:
            raise ValueError("flow_step must be positive")
        sched = tuple(float(e) for e in self.eps_schedule)
        if not sched or sched[-1] != 0.0 or any(a <= b for a, b in zip(sched, sched[1:])):
            raise ValueError(f"eps_schedule must decrease strictly to 0, got {sched}")
        object.__setattr__(self, "eps_schedule", sched)

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)


@dataclass(frozen=True)
class SolutionRecord:
    u: ScalarField
    eps: float
    residual_norms: tuple
    energy: object
    energy_eps: float
    gauss_bonnet_residual: float
    chi: float
    iterations: int
    converged: bool
    status: str
    max_u: float
    solver: str
    eps_path: tuple = ()
    chain_broken: bool = False
    morse_index_G: int | None = None
    residual_floor: tuple = (0.0, 0.0)
    history: list = field(default_factory=list, repr=False)

    @property
    def residual(self):
        return max(self.residual_norms)

    def as_dict(self):
        return {
            "eps": self.eps,
            "residual_interior": self.residual_norms[0],
            "residual_boundary": self.residual_norms[1],
            "residual_floor_interior": self.residual_floor[0],
            "residual_floor_boundary": self.residual_floor[1],
            "energy": None if self.energy is None else self.energy.as_dict(),
            "energy_eps": self.energy_eps,
            "gauss_bonnet_residual": self.gauss_bonnet_residual,
            "chi": self.chi,
            "iterations": self.iterations,
            "converged": self.converged,
            "status": self.status,
            "max_u": self.max_u,
            "min_u": float(np.min(self.u.data)),
            "u_center": float(np.mean(self.u.data[0])),
            "solver": self.solver,
            "eps_path": list(self.eps_path),
            "chain_broken": self.chain_broken,
            "morse_index_G": "not computed" if self.morse_index_G is None else self.morse_index_G,
        }

    def write(self, stem):
        """Snapshot ``stem.txt``, JSON sidecar ``stem.json`` and iteration log ``stem_log.csv``."""
        stem = Path(stem)
        write_snapshot(self.u, stem.with_suffix(".txt"))
        stem.with_suffix(".json").write_text(json.dumps(self.as_dict(), sort_keys=True, indent=2) + "\n")
        write_log(self.history, stem.parent / (stem.name + "_log.csv"))


LOG_COLUMNS = ("iter", "residual_int", "residual_bdy", "energy", "max_u", "step")


def write_log(history, path):
    lines = [",".join(LOG_COLUMNS)]
    for row in history:
        lines.append(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c]) for c in LOG_COLUMNS))
    Path(path).write_text("\n".join(lines) + "\n")


def _make_record(F, v, iterations, status, solver, history):
    c = F.coeffs
    u = ScalarField(F.grid, v.reshape(F.grid.shape))
    try:
        norms = F.residual_norms(v)
        e_eps = F.value(v)
        floor = F.residual_floor(v)
    except ExpOverflow:
        norms, e_eps, floor = (math.inf, math.inf), math.nan, (math.nan, math.nan)
    energy = energy_I(u, c.K, c.h) if c.K is not None else None
    chi = c.chi
    gb = gauss_bonnet_residual(u, c.K_eff, c.h_eff, chi)
    return SolutionRecord(
        u=u,
        eps=c.eps,
        residual_norms=norms,
        energy=energy,
        energy_eps=e_eps,
        gauss_bonnet_residual=gb,
        chi=chi,
        iterations=iterations,
        converged=status == "converged",
        status=status,
        max_u=float(np.max(v)),
        solver=solver,
        eps_path=(c.eps,),
        residual_floor=floor,
        history=history,
    )


def _reduce(grid, group, u0):
    E = extension_matrix(grid, group)
    v = symmetrize(u0, group).data.ravel().copy()
    if not np.all(np.isfinite(v)):
        raise ValueError("initial guess has non-finite entries")
    return E, v


def _at_floor(F, v, norms, tol):
    """True if a run that can make no further progress sits at the round-off floor."""
    fi, fb = F.residual_floor(v)
    return norms[0] <= max(tol, fi) and norms[1] <= max(tol, fb)


def _log(history, it, norms, energy, v, step):
    history.append(
        {"iter": it, "residual_int": norms[0], "residual_bdy": norms[1], "energy": energy, "max_u": float(np.max(v)), "step": step}
    )


# ---------------------------------------------------------------------------
# Newton
# ---------------------------------------------------------------------------

def newton_solve(u0, c, opts=None):
    """Damped Newton on the discrete residual within the symmetric subspace.

    The Newton direction solves ``E^T H E dz = -E^T g`` with ``H`` the Hessian
    of ``I_eps``; steps are backtracked on ``|E^T g|^2``.  Returns the
    converged record or the iterate with the smallest residual.  A run whose
    line search fails while the residual is below its round-off floor
    (:meth:`DiscreteFunctional.residual_floor`) counts as converged.

    Raises
    ------
    SingularJacobian
        The reduced Jacobian could not be factorized; ``record`` holds the
        current iterate.
    """
    opts = opts or SolverOptions()
    F = DiscreteFunctional(c)
    E, v = _reduce(c.grid, opts.group, u0)
    Et = E.T.tocsr()
    history = []
    best = (math.inf, v, 0)
    status = "max_iters"
    it = 0
    step = 0.0
    for it in range(opts.max_iters + 1):
        try:
            norms = F.residual_norms(v)
            gG = Et @ F.gradient(v)
            energy = F.value(v)
        except ExpOverflow:
            status = "overflow"
            break
        _log(history, it, norms, energy, v, step)
        if max(norms) < best[0]:
            best = (max(norms), v, it)
        if max(norms) <= opts.tol_residual:
            status = "converged"
            break
        if it == opts.max_iters:
            break
        if np.max(v) > opts.u_cap:
            status = "blow_up"
            break
        HG = (Et @ F.hessian(v) @ E).tocsc()
        try:
            lu = spla.splu(HG)
            dz = lu.solve(-gG)
            # one refinement step: the pole ring divides by tiny cell areas
            dz += lu.solve(-gG - HG @ dz)
        except RuntimeError as exc:
            rec = _make_record(F, v, it, "singular", "newton", history)
            raise SingularJacobian(f"Newton Jacobian is singular at iteration {it}: {exc}", record=rec) from exc
        if not np.all(np.isfinite(dz)):
            rec = _make_record(F, v, it, "singular", "newton", history)
            raise SingularJacobian(f"Newton step is not finite at iteration {it}", record=rec)
        dv = E @ dz
        merit = 0.5 * float(gG @ gG)
        t = 1.0
        while t >= 1e-10:
            vn = v + t * dv
            try:
                gn = Et @ F.gradient(vn)
                mn = 0.5 * float(gn @ gn)
            except ExpOverflow:
                mn = math.inf
            if mn <= (1.0 - 1e-4 * t) * merit:
                break
            t *= opts.damping
        else:
            status = "converged" if _at_floor(F, v, norms, opts.tol_residual) else "stalled"
            break
        v, step = vn, t
    if status == "converged":
        return _make_record(F, v, it, status, "newton", history)
    return _make_record(F, best[1], best[2], status, "newton", history)


# ---------------------------------------------------------------------------
# Gradient flow
# ---------------------------------------------------------------------------

def gradient_flow(u0, c, opts=None):
    """Descent on ``I_eps`` preconditioned by ``-Lap + id`` with Armijo backtracking.

    Stops at the residual tolerance (or its round-off floor once the line
    search fails), after ``max_iters`` steps, or with status ``"unbounded"``
    once ``I_eps`` drops below ``energy_floor`` or ``|u|`` exceeds ``u_cap``.
    """
    opts = opts or SolverOptions()
    F = DiscreteFunctional(c)
    E, v = _reduce(c.grid, opts.group, u0)
    Et = E.T.tocsr()
    lu = spla.splu((Et @ F.gram() @ E).tocsc())
    history = []
    status = "max_iters"
    try:
        energy = F.value(v)
    except ExpOverflow:
        return _make_record(F, v, 0, "overflow", "gradient_flow", history)
    step = 0.0
    it = 0
    for it in range(opts.max_iters + 1):
        norms = F.residual_norms(v)
        _log(history, it, norms, energy, v, step)
        if max(norms) <= opts.tol_residual:
            status = "converged"
            break
        if energy < opts.energy_floor or np.max(np.abs(v)) > opts.u_cap:
            status = "unbounded"
            break
        if it == opts.max_iters:
            break
        g = F.gradient(v)
        w = -(E @ lu.solve(Et @ g))
        slope = float(g @ w)
        t = opts.flow_step
        while t >= 1e-12 * opts.flow_step:
            vn = v + t * w
            try:
                en = F.value(vn)
            except ExpOverflow:
                en = math.inf
            if en <= energy + 1e-4 * t * slope:
                break
            t *= opts.damping
        else:
            status = "converged" if _at_floor(F, v, norms, opts.tol_residual) else "stalled"
            break
        v, energy, step = vn, en, t
    return _make_record(F, v, it, status, "gradient_flow", history)


# ---------------------------------------------------------------------------
# Continuation in eps
# ---------------------------------------------------------------------------

def default_start(K, h, grid):
    """Initial guess for the first continuation stage.

    If the deficit exceeds one somewhere, the constant-curvature solution for
    the mean deficit, shifted for the actual ``K``; otherwise zero.
    """
    D = deficit(K, h)
    d = float(np.mean(D.values.data))
    if np.max(D.values.data) <= 1 or d <= 1:
        return grid.zeros()
    mu = d + math.sqrt(d * d - 1)
    return tilde(radial_bubble(mu, grid), K)


def continuation_solve(spec, grid, opts=None, u0=None, solver=None):
    """Solve along ``opts.eps_schedule`` with warm starts; last record is at ``eps = 0``.

    A failed stage does not stop the chain: the next stage starts from the
    best iterate and every later record is marked ``chain_broken``.
    """
    opts = (opts or SolverOptions()).replace(group=spec.group)
    solver = solver or newton_solve
    K, h = eval_curvatures(spec, grid)
    u = default_start(K, h, grid) if u0 is None else u0
    records = []
    path = []
    broken = False
    for eps in opts.eps_schedule:
        c = perturbed_coeffs(K, h, eps)
        try:
            rec = solver(u, c, opts)
        except SingularJacobian as exc:
            rec = exc.record
        path.append(eps)
        broken = broken or not rec.converged
        rec = dataclasses.replace(rec, eps_path=tuple(path), chain_broken=broken)
        records.append(rec)
        u = rec.u
    return records


# ---------------------------------------------------------------------------
# Mountain pass
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MountainPassResult:
    """``level`` is the highest node energy on the last relaxed (zoomed) path,
    an estimate of the min-max value; ``critical_point`` is the
    Newton-polished saddle and ``path_energies`` the first relaxed path."""

    level: float
    critical_point: SolutionRecord
    path_energies: np.ndarray
    endpoint_energies: tuple
    lower_bound: float
    delta: float
    separation_certified: bool
    iterations: int

    def as_dict(self):
        return {
            "level": self.level,
            "critical_energy_eps": self.critical_point.energy_eps,
            "endpoint_energies": list(self.endpoint_energies),
            "lower_bound": self.lower_bound,
            "delta": self.delta,
            "separation_certified": self.separation_certified,
            "iterations": self.iterations,
            "critical_point": self.critical_point.as_dict(),
        }


class _Reduced:
    """Energy, gradient and ``H^1`` geometry in reduced coordinates."""

    def __init__(self, F, group):
        self.F = F
        self.E = extension_matrix(F.grid, group)
        self.Et = self.E.T.tocsr()
        self.mult = np.asarray(self.Et @ np.ones(F.grid.size)).ravel()
        self.M = (self.Et @ F.gram() @ self.E).tocsc()
        self.lu = spla.splu(self.M)

    def lift(self, z):
        return self.E @ z

    def restrict(self, v):
        return (self.Et @ v) / self.mult

    def value(self, z):
        try:
            return self.F.value(self.lift(z))
        except ExpOverflow:
            return math.inf

    def precond_grad(self, z):
        g = self.Et @ self.F.gradient(self.lift(z))
        return self.lu.solve(g), g

    def norm(self, z):
        return math.sqrt(max(float(z @ (self.M @ z)), 0.0))


def _reparametrize(R, Z):
    n = len(Z)
    seg = np.array([R.norm(Z[i + 1] - Z[i]) for i in range(n - 1)])
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] == 0:
        return Z
    target = np.linspace(0.0, s[-1], n)
    out = [Z[0]]
    for t in target[1:-1]:
        i = min(np.searchsorted(s, t, side="right") - 1, n - 2)
        w = (t - s[i]) / seg[i] if seg[i] > 0 else 0.0
        out.append((1 - w) * Z[i] + w * Z[i + 1])
    out.append(Z[-1])
    return out


def _relax_string(R, za, zb, n_path, max_steps, rel_tol, Z=None):
    """Lower the path maximum: descend the highest interior node, then re-even.

    Stops when the preconditioned gradient at the highest node is below
    ``rel_tol`` (relative to the node's norm) or after ``max_steps`` moves.
    """
    if Z is None:
        Z = [za + t * (zb - za) for t in np.linspace(0.0, 1.0, n_path)]
    ends = (R.value(Z[0]), R.value(Z[-1]))
    energies = np.array([R.value(z) for z in Z])
    t_prev = 1.0
    k = 0
    for k in range(1, max_steps + 1):
        imax = int(np.argmax(energies))
        if imax in (0, n_path - 1) or energies[imax] <= max(ends):
            raise PathCollapse("path maximum reached an endpoint: endpoints are not separated by a ridge")
        p, g = R.precond_grad(Z[imax])
        gnorm = math.sqrt(max(float(g @ p), 0.0))
        if gnorm <= rel_tol * max(1.0, R.norm(Z[imax])):
            break
        slope = -float(g @ p)
        t = min(1.0, 2.0 * t_prev)
        while t > 1e-14:
            zn = Z[imax] - t * p
            en = R.value(zn)
            if en <= energies[imax] + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            break
        t_prev = t
        Z[imax] = zn
        Z = _reparametrize(R, Z)
        energies = np.array([R.value(z) for z in Z])
    return Z, energies, k


def mountain_pass(u_a, u_b, c, n_path=33, opts=None, max_steps=200, zoom_levels=4, c_norm=None):
    """Min-max search between two low-energy states.

    The straight path from ``u_a`` to ``u_b`` is relaxed with a string method
    (descent of interior nodes plus arclength re-evening).  The neighbours
    of the highest node then become new endpoints and the search is repeated
    on the shorter path; finally Newton is started from the highest node.

    Raises
    ------
    PathCollapse
        The path maximum sits at an endpoint, so the endpoints are not
        separated by a mountain range.
    """
    opts = opts or SolverOptions()
    F = DiscreteFunctional(c)
    R = _Reduced(F, opts.group)
    za = R.restrict(symmetrize(u_a, opts.group).data.ravel())
    zb = R.restrict(symmetrize(u_b, opts.group).data.ravel())
    ends = (R.value(za), R.value(zb))
    Z, energies, total = _relax_string(R, za, zb, n_path, max_steps, 1e-3)
    path_energies = energies
    for _ in range(zoom_levels):
        imax = int(np.argmax(energies))
        if R.norm(Z[imax + 1] - Z[imax - 1]) <= 1e-3 * max(1.0, R.norm(Z[imax])):
            break
        try:
            Z, energies, k = _relax_string(R, Z[imax - 1], Z[imax + 1], 9, max_steps, 1e-4)
        except PathCollapse:
            break
        total += k
    level = float(energies.max())
    start = ScalarField(c.grid, R.lift(Z[int(np.argmax(energies))]).reshape(c.grid.shape))
    try:
        crit = newton_solve(start, c, opts)
    except SingularJacobian as exc:
        crit = exc.record
    crit = dataclasses.replace(crit, solver="mountain_pass")

    ua = ScalarField(c.grid, R.lift(za).reshape(c.grid.shape))
    ub = ScalarField(c.grid, R.lift(zb).reshape(c.grid.shape))
    la = c.grid.dtheta * math.fsum(np.exp(ua.boundary.data / 2).tolist())
    lb = c.grid.dtheta * math.fsum(np.exp(ub.boundary.data / 2).tolist())
    hmax = float(np.max(c.h_eff.data))
    if hmax > 0:
        delta = min(max(2 * math.pi / hmax, min(la, lb)), max(la, lb))
    else:
        delta = max(la, lb)
    kw = {} if c_norm is None else {"c_norm": c_norm}
    lower = level_set_lower_bound(delta, hmax, **kw)
    return MountainPassResult(level, crit, path_energies, ends, lower, delta, lower > max(ends), total)


def default_endpoints(K, h, grid, u_low=-8.0, margin=1.0):
    """``(u_a, u_b)``: the constant ``u_low`` and a radial bubble with energy below ``I(u_a) - margin``."""
    ua = grid.zeros() + u_low
    target = energy_I(ua, K, h).I_value - margin
    _, ub = mountain_pass_endpoint(K, h, grid, target)
    return ua, ub


# ---------------------------------------------------------------------------
# Morse index
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MorseResult:
    index: int
    eigenvalues: np.ndarray
    modes: list
    tol_eig: float
    norm_Q: float

    def __iter__(self):
        yield self.index
        yield self.eigenvalues


def morse_index_G(u, c, group, n_eigs=6, dense_limit=2500):
    """Number of negative directions of the second variation within ``group``-symmetric functions.

    Solves ``Q v = lambda G v`` with ``G`` the ``H^1`` Gram matrix, restricted
    to the symmetric subspace; eigenvalues below ``-1e-8 * |Q|`` count.
    ``|Q|`` is the largest generalized eigenvalue in modulus.
    """
    if n_eigs < 3:
        raise ValueError("n_eigs must be >= 3")
    F = DiscreteFunctional(c)
    E = extension_matrix(c.grid, group)
    Et = E.T.tocsr()
    H = (Et @ F.hessian(u.data.ravel()) @ E).tocsc()
    M = (Et @ F.gram() @ E).tocsc()
    m = H.shape[0]
    k = min(n_eigs, m)
    try:
        if m <= dense_limit:
            w, V = sla.eigh(H.toarray(), M.toarray())
            norm_Q = float(np.max(np.abs(w)))
            w, V = w[:k], V[:, :k]
        else:
            w, V = spla.eigsh(H, k=k, M=M, which="SA", tol=1e-10, maxiter=20 * m)
            order = np.argsort(w)
            w, V = w[order], V[:, order]
            top = spla.eigsh(H, k=1, M=M, which="LA", tol=1e-6, return_eigenvectors=False)
            norm_Q = float(max(abs(top[0]), np.max(np.abs(w))))
    except (np.linalg.LinAlgError, spla.ArpackError, spla.ArpackNoConvergence) as exc:
        raise EigSolverFailure(f"generalized eigenproblem failed: {exc}") from exc
    tol = 1e-8 * norm_Q
    modes = [ScalarField(c.grid, (E @ V[:, i]).reshape(c.grid.shape)) for i in range(k)]
    return MorseResult(int(np.sum(w < -tol)), w, modes, tol, norm_Q)
