import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import cot_diff_matrix, apply_matrix_along
from transflow.grid import ChartGrid, SCHEMES

TWO_PI = 2 * np.pi


def test_rejects_bad_construction():
    with pytest.raises(ValueError):
        ChartGrid((16,), (1.0,))
    with pytest.raises(ValueError):
        ChartGrid((16, 4), (1.0, 1.0))
    with pytest.raises(ValueError):
        ChartGrid((16, 16), (1.0, -1.0))
    with pytest.raises(ValueError):
        ChartGrid((16, 16), (1.0, 1.0), scheme="fd6")


def test_geometry_of_the_box():
    grid = ChartGrid((16, 32), (2.0, 1.0))
    assert grid.m == 2
    assert grid.spacing == (0.125, 1 / 32)
    assert grid.cell_volume == pytest.approx(2.0 / 512)
    assert grid.n_nodes == 512
    assert grid.refined().dims == (32, 64)
    x, y = grid.coords()
    assert x.shape == (16, 32) and x[1, 0] == 0.125 and y[0, 1] == 1 / 32


def test_spectral_derivative_matches_cotangent_matrix():
    grid = ChartGrid((16, 24), (1.0, 2.0))
    rng = np.random.default_rng(3)
    f = rng.standard_normal(grid.dims)
    # the Nyquist mode is where conventions differ; compare on a filtered field
    f = grid.fourier_multiply(f, grid.laplacian_symbol() < (0.9 * np.pi * 16) ** 2)
    for axis in range(2):
        mat = cot_diff_matrix(grid.dims[axis], grid.periods[axis])
        assert np.allclose(grid.diff(f, axis), apply_matrix_along(mat, f, axis), atol=1e-11)


@pytest.mark.parametrize("scheme", SCHEMES)
def test_derivative_of_constant_is_zero(scheme):
    grid = ChartGrid.square(16, scheme=scheme)
    assert np.max(np.abs(grid.diff(np.full(grid.dims, 3.0), 0))) < 1e-13


def test_spectral_derivative_exact_on_trig_polynomial():
    grid = ChartGrid.square(16, m=3)
    x, y, z = grid.coords()
    f = np.sin(TWO_PI * x) * np.cos(2 * TWO_PI * z) + np.cos(3 * TWO_PI * y)
    assert np.allclose(grid.diff(f, 1), -3 * TWO_PI * np.sin(3 * TWO_PI * y), atol=1e-11)
    assert np.allclose(grid.diff(f, 2), -2 * TWO_PI * np.sin(TWO_PI * x) * np.sin(2 * TWO_PI * z), atol=1e-11)


@pytest.mark.parametrize("scheme, order", [("fd2", 2), ("fd4", 4)])
def test_finite_difference_order(scheme, order):
    errs = []
    for n in (32, 64):
        grid = ChartGrid.square(n, scheme=scheme)
        x, y = grid.coords()
        err = grid.diff(np.sin(TWO_PI * x), 0) - TWO_PI * np.cos(TWO_PI * x)
        errs.append(np.max(np.abs(err)))
    assert np.log2(errs[0] / errs[1]) == pytest.approx(order, abs=0.05)


@pytest.mark.parametrize("scheme", SCHEMES)
@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_derivative_is_antisymmetric(scheme, seed):
    # <f, D g> = -<D f, g> on the periodic grid
    grid = ChartGrid((12, 16), (1.0, 1.5), scheme)
    rng = np.random.default_rng(seed)
    f, g = rng.standard_normal((2,) + grid.dims)
    for axis in range(2):
        lhs = np.sum(f * grid.diff(g, axis))
        rhs = -np.sum(grid.diff(f, axis) * g)
        assert lhs == pytest.approx(rhs, abs=1e-10 * (1 + abs(lhs)))


def test_div_of_grad_matches_laplacian_symbol():
    grid = ChartGrid.square(16)
    x, y = grid.coords()
    f = np.cos(TWO_PI * x + 2 * TWO_PI * y)
    lap = grid.div(grid.grad(f))
    assert np.allclose(lap, -5 * TWO_PI**2 * f, atol=1e-9)
    via_symbol = grid.fourier_multiply(f, -grid.laplacian_symbol())
    assert np.allclose(lap, via_symbol, atol=1e-9)


def test_mode_filter_keeps_resolved_modes():
    grid = ChartGrid.square(32)
    x, y = grid.coords()
    smooth = np.cos(TWO_PI * 5 * x) * np.sin(TWO_PI * 8 * y)
    assert np.max(np.abs(grid.filter_high_modes(smooth) - smooth)) < 1e-9
    top = np.cos(TWO_PI * 15 * x)
    assert np.max(np.abs(grid.filter_high_modes(top))) < 0.05


def test_mode_filter_only_for_spectral():
    grid = ChartGrid.square(16, scheme="fd4")
    x = np.random.default_rng(0).standard_normal(grid.dims)
    assert grid.filter_high_modes(x) is x
