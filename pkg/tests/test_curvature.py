import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diskcurvature.curvature import (
    Constant,
    CurvatureSpec,
    Cyclic,
    FourierCosSin,
    FullRotation,
    RadialPolynomial,
    Tabulated,
    Trivial,
    check_hypotheses,
    deficit,
    eval_curvatures,
    extension_matrix,
    read_tabulated_csv,
    rescale_curvatures,
    symmetrize,
)
from diskcurvature.errors import DegenerateCurvature, NonPositiveLambda, ResolutionNotDivisible, ShapeMismatch
from diskcurvature.grid import BoundaryField, Grid, ScalarField, as_boundary

G = Grid(16, 64)


def random_band_limited(grid, rng, modes=5):
    a = rng.standard_normal((modes, 2))
    return grid.boundary_field(lambda t: sum(a[m, 0] * np.cos(m * t) + a[m, 1] * np.sin(m * t) for m in range(modes)))


# --- evaluation ------------------------------------------------------------------

def test_constant_K():
    K, _ = eval_curvatures(CurvatureSpec(Constant(-1.0), Constant(1.0)), G)
    assert np.all(K.data == -1.0)


def test_radial_polynomial_K():
    K, _ = eval_curvatures(CurvatureSpec(RadialPolynomial((-1.0, -0.5)), Constant(1.0)), G)
    assert K.data[-1, 0] == pytest.approx(-1.5)
    assert np.allclose(K.data[:, 3], -1 - 0.5 * G.r**2)


def test_fourier_h():
    h = FourierCosSin({0: 1.8, 2: (0.3, 0.0)})
    _, hb = eval_curvatures(CurvatureSpec(Constant(-1.0), h), G)
    assert hb.data[0] == pytest.approx(2.1)
    assert np.allclose(hb.data, 1.8 + 0.3 * np.cos(2 * G.theta))


def test_tabulated_shape_checked():
    spec = CurvatureSpec(Tabulated(Grid(8, 8).zeros() - 1.0), Constant(1.0))
    with pytest.raises(ShapeMismatch):
        eval_curvatures(spec, G)


def test_tabulated_csv_round_trip(tmp_path):
    g = Grid(8, 8)
    path = tmp_path / "h.csv"
    path.write_text("theta,value\n" + "\n".join(f"{float(t)!r},{1 + 0.1 * math.cos(t)!r}" for t in g.theta) + "\n")
    h = read_tabulated_csv(path, g)
    assert isinstance(h, BoundaryField)
    assert np.allclose(h.data, 1 + 0.1 * np.cos(g.theta))
    path.write_text("\n".join(f"{float(r)!r},{float(t)!r},-1" for r in g.r for t in g.theta[:-1]) + "\n")
    with pytest.raises(ShapeMismatch):
        read_tabulated_csv(path, g)


def test_spec_group_invariants():
    with pytest.raises(ValueError):
        CurvatureSpec(Constant(-1.0), FourierCosSin({0: 1.0, 1: 0.2}), FullRotation())
    with pytest.raises(ValueError):
        CurvatureSpec(Constant(-1.0), FourierCosSin({0: 1.0, 3: 0.2}), Cyclic(2))
    CurvatureSpec(Constant(-1.0), FourierCosSin({0: 1.0, 4: 0.2}), Cyclic(2))
    with pytest.raises(ValueError):
        Cyclic(1)


# --- deficit -------------------------------------------------------------------------

def test_deficit_constants():
    D = deficit(G.zeros() - 4.0, as_boundary(G, 3.0))
    assert np.allclose(D.values.data, 1.5)
    assert np.abs(D.tangential_derivative.data).max() < 1e-13


def test_deficit_fourier():
    h = G.boundary_field(lambda t: 1.8 + 0.3 * np.cos(2 * t))
    D = deficit(G.zeros() - 1.0, h)
    assert np.allclose(D.values.data, h.data)
    assert np.allclose(D.tangential_derivative.data, -0.6 * np.sin(2 * G.theta), atol=1e-12)


def test_deficit_derivative_vs_finite_differences():
    rng = np.random.default_rng(3)
    h = random_band_limited(G, rng)
    D = deficit(G.zeros() - 1.0, h)
    fd = (np.roll(D.values.data, -1) - np.roll(D.values.data, 1)) / (2 * G.dtheta)
    assert np.abs(fd - D.tangential_derivative.data).max() <= 30 * G.dtheta**2 * np.abs(D.values.data).max()
    assert abs(G.dtheta * np.sum(D.tangential_derivative.data)) < 1e-12


def test_deficit_needs_negative_boundary_K():
    with pytest.raises(DegenerateCurvature):
        deficit(G.zeros(), as_boundary(G, 1.0))


# --- hypotheses ----------------------------------------------------------------------

def test_hypotheses_constant_case():
    rep = check_hypotheses(CurvatureSpec(Constant(-1.0), Constant(1.25), FullRotation()), G)
    assert rep.H1 and rep.H2 and rep.H3 and rep.G_sym
    assert rep.max_deficit == pytest.approx(1.25)


def test_hypotheses_critical_deficit():
    rep = check_hypotheses(CurvatureSpec(Constant(-1.0), Constant(1.0)), G)
    assert not rep.H2
    assert rep.G_sym is None


def test_hypotheses_transversal_crossing():
    spec = CurvatureSpec(Constant(-1.0), FourierCosSin({0: 1.0, 1: 0.5}))
    rep = check_hypotheses(spec, G)
    assert rep.H2 and rep.H3
    assert rep.near_one == pytest.approx([math.pi / 2, 3 * math.pi / 2])


def test_hypotheses_interior_zero_curvature():
    spec = CurvatureSpec(RadialPolynomial((0.0, -1.0)), Constant(1.2))
    rep = check_hypotheses(spec, G, annulus=0.2)
    assert rep.H1 and rep.H1_boundary_annulus


def test_hypotheses_positive_curvature_fails_H1():
    rep = check_hypotheses(CurvatureSpec(RadialPolynomial((0.5, -1.0)), Constant(1.2)), G)
    assert not rep.H1


@settings(max_examples=30, deadline=None)
@given(st.floats(0.2, 5.0), st.floats(0.01, 3.0), st.floats(0.0, 0.99))
def test_subcritical_regime_never_has_H2(c0, extra, frac):
    # K <= -c0^2 and h <= c0 force D <= 1
    spec = CurvatureSpec(Constant(-(c0 * c0) - extra), Constant(frac * c0))
    assert not check_hypotheses(spec, Grid(8, 16)).H2


# --- scaling --------------------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 100.0))
def test_deficit_scale_invariant(lam):
    rng = np.random.default_rng(0)
    K = G.polar_field(lambda r, t: -1 - r * r * (1 + 0.3 * np.cos(2 * t)))
    h = random_band_limited(G, rng)
    K2, h2 = rescale_curvatures(K, h, lam)
    assert np.allclose(deficit(K2, h2).values.data, deficit(K, h).values.data, rtol=1e-14, atol=1e-14)


def test_rescale_examples():
    K2, h2 = rescale_curvatures(G.zeros() - 1.0, as_boundary(G, 1.25), 2.0)
    assert np.all(K2.data == -4.0) and np.all(h2.data == 2.5)
    K1, h1 = rescale_curvatures(G.zeros() - 1.0, as_boundary(G, 1.25), 1.0)
    assert np.all(K1.data == -1.0) and np.all(h1.data == 1.25)
    with pytest.raises(NonPositiveLambda):
        rescale_curvatures(K1, h1, 0.0)


# --- symmetry --------------------------------------------------------------------

def test_symmetrize_examples():
    f = G.polar_field(lambda r, t: r * np.cos(t))
    assert np.abs(symmetrize(f, Cyclic(2)).data).max() < 1e-15
    g2 = G.polar_field(lambda r, t: r * np.cos(2 * t))
    assert np.abs(symmetrize(g2, Cyclic(2)).data - g2.data).max() < 1e-15
    rng = np.random.default_rng(1)
    f = ScalarField(G, rng.standard_normal(G.shape))
    P = symmetrize(f, FullRotation())
    assert np.allclose(P.data, f.data.mean(axis=1, keepdims=True))
    assert np.abs(symmetrize(P, FullRotation()).data - P.data).max() <= 1e-12 * f.max_abs()
    assert symmetrize(f, Trivial()) is f


def test_symmetrize_resolution():
    with pytest.raises(ResolutionNotDivisible):
        symmetrize(Grid(8, 10).zeros(), Cyclic(3))


@settings(max_examples=20, deadline=None)
@given(st.sampled_from([2, 4, 8]), st.integers(0, 10_000))
def test_symmetrize_is_linear_projection(k, seed):
    rng = np.random.default_rng(seed)
    f = ScalarField(G, rng.standard_normal(G.shape))
    g = ScalarField(G, rng.standard_normal(G.shape))
    grp = Cyclic(k)
    Pf = symmetrize(f, grp)
    assert np.abs(symmetrize(Pf, grp).data - Pf.data).max() <= 1e-12 * f.max_abs()
    lin = symmetrize(f * 2.0 + g, grp).data - (2.0 * Pf.data + symmetrize(g, grp).data)
    assert np.abs(lin).max() <= 1e-12 * (f.max_abs() + g.max_abs())


def test_extension_matrix_projection():
    E = extension_matrix(G, Cyclic(4))
    rng = np.random.default_rng(2)
    f = ScalarField(G, rng.standard_normal(G.shape))
    D = (E.T @ E).diagonal()
    proj = E @ ((E.T @ f.data.ravel()) / D)
    assert np.allclose(proj.reshape(G.shape), symmetrize(f, Cyclic(4)).data)
