import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from transflow.errors import SingularMetric
from transflow.geometry import MetricField, first_bianchi_residual, volume
from transflow.grid import ChartGrid
from transflow import calculus as calc
from transflow.scenarios import build

TWO_PI = 2 * np.pi


def conformal_metric(n=64, amp=0.1, scheme="spectral"):
    grid = ChartGrid.square(n, scheme=scheme)
    x, y = grid.coords()
    return MetricField.conformal(grid, oracles.conformal_u(x, y, amp)), x, y


def test_metric_is_symmetrized_and_frozen():
    grid = ChartGrid.square(8)
    raw = np.zeros((2, 2) + grid.dims)
    raw[0, 0] = raw[1, 1] = 2.0
    raw[0, 1] = 0.2
    raw[1, 0] = 0.4
    g = MetricField(grid, raw)
    assert np.array_equal(g.g[0, 1], g.g[1, 0])
    assert np.allclose(g.g[0, 1], 0.3, rtol=0, atol=1e-15)
    with pytest.raises(ValueError):
        g.g[0, 0, 0, 0] = 1.0


@pytest.mark.parametrize("bad", ["nan", "singular", "indefinite"])
def test_singular_metric_rejected(bad):
    grid = ChartGrid.square(8)
    raw = np.ones((2, 2) + grid.dims) * np.eye(2)[:, :, None, None]
    if bad == "nan":
        raw[0, 0, 3, 3] = np.nan
    elif bad == "singular":
        raw[0, 1, 2, 2] = raw[1, 0, 2, 2] = 1.0
    else:
        raw[:, :, 1, 1] = -np.eye(2)
    with pytest.raises(SingularMetric):
        MetricField(grid, raw)


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        MetricField(ChartGrid.square(8), np.ones((2, 2, 8, 9)))


def test_inverse_and_determinant_3d():
    grid = ChartGrid.square(8, m=3)
    rng = np.random.default_rng(0)
    a = rng.standard_normal((3, 3) + grid.dims) * 0.3
    g = MetricField(grid, np.eye(3)[:, :, None, None, None] + np.einsum("ik...,jk...->ij...", a, a))
    mats = np.moveaxis(g.g, (0, 1), (-2, -1))
    assert np.allclose(g.det, np.linalg.det(mats))
    assert np.allclose(np.moveaxis(g.inv, (0, 1), (-2, -1)), np.linalg.inv(mats))


def test_upper_triangle_round_trip():
    g, _, _ = conformal_metric(16)
    back = MetricField.from_upper_triangle(g.grid, g.upper_triangle())
    assert np.array_equal(back.g, g.g)


def test_constant_metric_is_flat():
    grid = ChartGrid.square(16)
    g = MetricField(grid, np.array([[2.0, 0.3], [0.3, 1.0]])[:, :, None, None] * np.ones(grid.dims))
    assert np.max(np.abs(g.christoffel)) < 1e-12
    assert np.max(np.abs(g.curvature.ricci)) < 1e-12


def test_christoffel_matches_koszul_oracle():
    g, x, y = conformal_metric(64)
    expected = oracles.koszul_christoffel(np.asarray(g.g), oracles.conformal_dg(x, y))
    assert np.max(np.abs(g.christoffel - expected)) < 1e-8


def test_scalar_curvature_is_twice_gauss_curvature():
    g, x, y = conformal_metric(64)
    u = oracles.conformal_u(x, y)
    k = -np.exp(-2 * u) * oracles.conformal_lap_u(x, y)
    assert np.max(np.abs(g.curvature.scal - 2 * k)) < 1e-8


def test_surface_ricci_is_half_scal_times_metric():
    g, _, _ = conformal_metric(32)
    cb = g.curvature
    assert np.max(np.abs(cb.ricci - 0.5 * cb.scal * g.g)) < 1e-12


def test_scal_3d_conformal_formula():
    grid = ChartGrid.square(16, m=3)
    x, y, z = grid.coords()
    amp = 0.05
    u = amp * np.sin(TWO_PI * x) * np.cos(TWO_PI * z) + amp * np.sin(TWO_PI * y)
    du = amp * TWO_PI * np.stack([np.cos(TWO_PI * x) * np.cos(TWO_PI * z),
                                  np.cos(TWO_PI * y) / 1.0,
                                  -np.sin(TWO_PI * x) * np.sin(TWO_PI * z)])
    lap = -TWO_PI**2 * (2 * amp * np.sin(TWO_PI * x) * np.cos(TWO_PI * z) + amp * np.sin(TWO_PI * y))
    # Scal of e^{2u} delta in three dimensions
    expected = -np.exp(-2 * u) * (4 * lap + 2 * np.sum(du**2, axis=0))
    g = MetricField.conformal(grid, u)
    assert np.max(np.abs(g.curvature.scal - expected)) < 1e-8


def test_riemann_symmetries_and_contraction():
    g, _, _ = conformal_metric(32, amp=0.15)
    cb = g.curvature
    r = cb.riemann
    assert np.max(np.abs(r + np.swapaxes(r, 1, 2))) == 0.0
    lowered = np.einsum("lp...,pijk...->lijk...", g.g, r)
    assert np.max(np.abs(lowered + np.einsum("kijl...->lijk...", lowered))) < 1e-10
    assert first_bianchi_residual(cb) < 1e-12
    assert np.max(np.abs(cb.ricci_from_riemann() - cb.ricci)) < 1e-12


def test_surface_riemann_is_determined_by_gauss_curvature():
    g, _, _ = conformal_metric(32)
    cb = g.curvature
    k = 0.5 * cb.scal
    gg = np.asarray(g.g)
    lowered = np.einsum("lp...,pijk...->lijk...", gg, cb.riemann)
    expected = k * (np.einsum("jk...,li...->lijk...", gg, gg) - np.einsum("ik...,lj...->lijk...", gg, gg))
    assert np.max(np.abs(lowered - expected)) < 1e-11


def test_contracted_bianchi():
    g, _, _ = conformal_metric(64)
    cb = g.curvature
    residual = calc.div_sym(cb.ricci, g) - 0.5 * g.grid.grad(cb.scal)
    assert np.max(np.abs(residual)) < 1e-9


@settings(max_examples=10, deadline=None)
@given(c=st.floats(0.1, 50.0))
def test_scaling_behaviour(c):
    g, _, _ = conformal_metric(16)
    h = g.scaled(c)
    assert np.allclose(h.christoffel, g.christoffel, atol=1e-12)
    assert np.allclose(h.curvature.ricci, g.curvature.ricci, atol=1e-10)
    assert np.allclose(h.curvature.scal, g.curvature.scal / c, atol=1e-10)
    assert volume(h) == pytest.approx(c * volume(g), rel=1e-13)


def test_volume_against_finer_quadrature():
    g, _, _ = conformal_metric(32)
    fine = ChartGrid.square(128)
    xf, yf = fine.coords()
    reference = np.sum(np.exp(2 * oracles.conformal_u(xf, yf))) * fine.cell_volume
    assert volume(g) == pytest.approx(reference, rel=1e-12)


def test_weighted_volume():
    sc = build("weighted-exact", 32)
    direct = np.sum(sc.model.w * sc.g0.sqrt_det) * sc.grid.cell_volume
    assert volume(sc.g0, sc.model) == pytest.approx(direct, rel=1e-14)


@pytest.mark.parametrize("scheme, lo, hi", [("fd2", 3.0, 5.0), ("fd4", 12.0, 20.0)])
def test_finite_difference_curvature_order(scheme, lo, hi):
    errs = []
    for n in (64, 128):
        g, x, y = conformal_metric(n, scheme=scheme)
        k = -np.exp(-2 * oracles.conformal_u(x, y)) * oracles.conformal_lap_u(x, y)
        errs.append(np.max(np.abs(g.curvature.scal - 2 * k)))
    assert lo <= errs[0] / errs[1] <= hi
