"""Bundled reproducible scenarios.

Each scenario pairs an initial transverse metric with a foliation model on
a unit periodic chart.  Reference values carry a provenance tag:

``TRIVIAL``  follows from the definitions directly;
``DERIVED``  computed independently (closed form or series), see the note.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .calculus import FoliationModel
from .errors import UnknownScenario
from .geometry import MetricField
from .grid import ChartGrid

CONFORMAL_AMPLITUDE = 0.1
WEIGHT_AMPLITUDE = 0.3
HARMONIC_TWIST = (0.5, 0.0)
ANISOTROPY_AMPLITUDE = 0.3
M3_SECOND_AMPLITUDE = 0.05

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Reference:
    value: float
    provenance: str
    note: str = ""


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    model: FoliationModel
    g0: MetricField
    description: str
    expected: dict = field(default_factory=dict)

    @property
    def grid(self):
        return self.g0.grid

    @property
    def taut(self):
        return self.model.is_taut


def _series_mean_exp_sin_cos(a, terms=40):
    """``int_0^1 int_0^1 exp(a sin(2 pi x) cos(2 pi y)) dx dy`` by its power
    series; ``<sin^2n> = <cos^2n> = binom(2n, n) / 4^n`` and odd moments vanish."""
    total = 0.0
    for n in range(terms):
        moment = math.comb(2 * n, n) / 4.0**n
        total += a ** (2 * n) / math.factorial(2 * n) * moment**2
    return total


def _bessel_i0(x, terms=40):
    """``I_0(x) = int_0^1 exp(x cos 2 pi y) dy`` by its power series."""
    return sum((x / 2.0) ** (2 * k) / math.factorial(k) ** 2 for k in range(terms))


def _grid(m, dims, scheme):
    if dims is None:
        dims = 64 if m == 2 else 16
    if isinstance(dims, (int, np.integer)):
        dims = (int(dims),) * m
    dims = tuple(dims)
    if len(dims) != m:
        raise ValueError(f"scenario needs {m} grid axes, got dims {dims}")
    return ChartGrid(dims, (1.0,) * m, scheme)


def _flat_taut(grid):
    return (MetricField.identity(grid), FoliationModel.trivial(grid),
            "flat unit torus, constant leaf volume",
            {"lambda": Reference(0.0, "TRIVIAL", "H = 4 Delta_b has constant ground state"),
             "Vol": Reference(1.0, "TRIVIAL", "unit torus")})


def _conformal_taut(grid):
    x, y = grid.coords()
    u = CONFORMAL_AMPLITUDE * np.sin(TWO_PI * x) * np.cos(TWO_PI * y)
    vol = _series_mean_exp_sin_cos(2.0 * CONFORMAL_AMPLITUDE)
    return (MetricField.conformal(grid, u), FoliationModel.trivial(grid),
            "g = exp(2u) delta, u = 0.1 sin(2 pi y1) cos(2 pi y2), kappa = 0",
            {"Vol": Reference(vol, "DERIVED", "power series of int exp(2u)")})


def _weighted_exact(grid):
    x, _ = grid.coords()
    h = WEIGHT_AMPLITUDE * np.cos(TWO_PI * x)
    return (MetricField.identity(grid), FoliationModel.from_potential(grid, h),
            "flat metric, w = exp(-h), h = 0.3 cos(2 pi y1), kappa = dh",
            {"lambda": Reference(0.0, "DERIVED",
                                 "on a flat metric F(f) equals the classical entropy at f + h, minimum 0 at f = -h + const"),
             "Vol": Reference(_bessel_i0(WEIGHT_AMPLITUDE), "DERIVED", "int exp(-h) = I_0(0.3)")})


def _twisted_nontaut(grid):
    c = np.array(HARMONIC_TWIST)
    model = FoliationModel(grid, np.ones(grid.dims), np.zeros(grid.dims), c)
    return (MetricField.identity(grid), model,
            "flat metric, w = 1, kappa = 0.5 dy1 (nontrivial class)",
            {"lambda": Reference(float(c @ c), "DERIVED",
                                 "F(f) = int |df|^2 e^{-f} + |c|^2 int e^{-f}; minimum |c|^2 at constant f"),
             "Vol": Reference(1.0, "TRIVIAL", "unit torus")})


def _anisotropic(grid):
    x, _ = grid.coords()
    g = np.zeros((2, 2) + grid.dims)
    g[0, 0] = 1.0
    g[1, 1] = (1.0 + ANISOTROPY_AMPLITUDE * np.cos(TWO_PI * x)) ** 2
    return (MetricField(grid, g), FoliationModel.trivial(grid),
            "g = diag(1, a^2), a = 1 + 0.3 cos(2 pi y1), kappa = 0 (warped torus, K = -a''/a)",
            {"Vol": Reference(1.0, "DERIVED", "int a = 1")})


def _m3_flat(grid):
    return (MetricField.identity(grid), FoliationModel.trivial(grid),
            "flat unit 3-torus, constant leaf volume",
            {"lambda": Reference(0.0, "TRIVIAL", "constant ground state"),
             "Vol": Reference(1.0, "TRIVIAL", "unit torus")})


def _m3_conformal(grid):
    x, y, z = grid.coords()
    u = (CONFORMAL_AMPLITUDE * np.sin(TWO_PI * x) * np.cos(TWO_PI * y)
         + M3_SECOND_AMPLITUDE * np.sin(TWO_PI * z))
    vol = _series_mean_exp_sin_cos(3.0 * CONFORMAL_AMPLITUDE) * _bessel_i0(3.0 * M3_SECOND_AMPLITUDE)
    return (MetricField.conformal(grid, u), FoliationModel.trivial(grid),
            "g = exp(2u) delta on the 3-torus, u = 0.1 sin(2 pi y1) cos(2 pi y2) + 0.05 sin(2 pi y3)",
            {"Vol": Reference(vol, "DERIVED", "product of power series for int exp(3u)")})


CATALOG = {
    "flat-taut": (2, _flat_taut),
    "conformal-taut": (2, _conformal_taut),
    "weighted-exact": (2, _weighted_exact),
    "twisted-nontaut": (2, _twisted_nontaut),
    "anisotropic": (2, _anisotropic),
    "m3-flat": (3, _m3_flat),
    "m3-conformal": (3, _m3_conformal),
}
NAMES = tuple(CATALOG)


def build(name, dims=None, scheme="spectral"):
    """Construct a catalog scenario.

    Parameters
    ----------
    name : str
        One of ``NAMES``.
    dims : int or tuple, optional
        Nodes per axis; an int means the same count on every axis.  Defaults
        to 64 (m = 2) or 16 (m = 3).
    scheme : str
        Differentiation scheme of the chart grid.
    """
    try:
        m, maker = CATALOG[name]
    except KeyError:
        raise UnknownScenario(f"unknown scenario {name!r}; choose from {', '.join(NAMES)}") from None
    grid = _grid(m, dims, scheme)
    g0, model, description, expected = maker(grid)
    return Scenario(name=name, model=model, g0=g0, description=description, expected=expected)
