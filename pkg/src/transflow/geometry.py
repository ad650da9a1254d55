"""Transverse metric, Levi-Civita connection and curvature on a chart grid.

Index conventions (components lead, grid axes trail):

* ``g[i, j]`` is ``g^T_{ij}``
* ``gamma[l, j, k]`` is ``Gamma^l_{jk}``
* ``riemann[l, i, j, k]`` is ``R^l_{ijk}``, i.e. ``R(d_i, d_j) d_k = R^l_{ijk} d_l``
* ``ricci[j, k]`` comes from ``Ric(Y) = sum_i R(Y, e_i) e_i``
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import SingularMetric
from .grid import ChartGrid

DET_FLOOR = 1e-10


def sym(t):
    """Exact symmetrization over the two leading component axes."""
    return 0.5 * (t + np.swapaxes(t, 0, 1))


def det_and_inverse(g):
    """Closed-form nodal determinant and inverse for m = 2 or 3."""
    m = g.shape[0]
    if m == 2:
        det = g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]
        adj = np.array([[g[1, 1], -g[0, 1]], [-g[1, 0], g[0, 0]]])
        return det, adj
    cof = np.empty_like(g)
    for i in range(3):
        for j in range(3):
            i1, i2 = (i + 1) % 3, (i + 2) % 3
            j1, j2 = (j + 1) % 3, (j + 2) % 3
            cof[j, i] = g[i1, j1] * g[i2, j2] - g[i1, j2] * g[i2, j1]
    det = g[0, 0] * cof[0, 0] + g[0, 1] * cof[1, 0] + g[0, 2] * cof[2, 0]
    return det, cof


def check_metric_array(g, det_floor=DET_FLOOR):
    """Validate a raw metric array and return ``(det, inverse)``.

    Raises SingularMetric on non-finite entries, a determinant at or below
    ``det_floor``, or loss of positive definiteness.
    """
    if not np.all(np.isfinite(g)):
        raise SingularMetric("metric has non-finite entries")
    det, adj = det_and_inverse(g)
    worst = float(det.min())
    if worst <= det_floor:
        idx = tuple(int(i) for i in np.unravel_index(int(np.argmin(det)), det.shape))
        raise SingularMetric(f"det g = {worst:.3e} at node {idx} (floor {det_floor:g})")
    # Sylvester criterion on the remaining leading minors
    if g[0, 0].min() <= 0 or (g.shape[0] == 3 and (g[0, 0] * g[1, 1] - g[0, 1] ** 2).min() <= 0):
        raise SingularMetric("metric is not positive definite")
    return det, sym(adj / det)


@dataclass(frozen=True, eq=False)
class MetricField:
    """Symmetric positive definite transverse metric, one ``m x m`` matrix
    per node.

    The array is symmetrized exactly on construction and made read-only.
    Connection and curvature are computed lazily and cached.
    """

    grid: ChartGrid
    g: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.g, dtype=float)
        m = self.grid.m
        if g.shape != (m, m) + self.grid.dims:
            raise ValueError(f"metric shape {g.shape} does not match grid {self.grid.dims}")
        g = sym(g)
        g.setflags(write=False)
        det, inv = check_metric_array(g)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "det", det)
        object.__setattr__(self, "inv", inv)

    @classmethod
    def identity(cls, grid):
        return cls(grid, np.eye(grid.m).reshape((grid.m, grid.m) + (1,) * grid.m) * np.ones(grid.dims))

    @classmethod
    def conformal(cls, grid, u):
        """``e^{2u} delta_ij`` for a scalar field ``u``."""
        return cls(grid, np.exp(2.0 * u) * np.eye(grid.m).reshape((grid.m, grid.m) + (1,) * grid.m))

    def scaled(self, c):
        return MetricField(self.grid, c * self.g)

    @property
    def m(self):
        return self.grid.m

    @cached_property
    def sqrt_det(self):
        return np.sqrt(self.det)

    @cached_property
    def dg(self):
        """``dg[a, i, j] = d_a g_ij``."""
        return grad_symmetric(self.grid, self.g)

    @cached_property
    def christoffel(self):
        return christoffel(self)

    @cached_property
    def curvature(self):
        return curvature(self)

    def raise_index(self, alpha):
        """``g^{ij} alpha_j`` for a 1-form ``alpha``."""
        return np.einsum("ij...,j...->i...", self.inv, alpha)

    def dot(self, a, b):
        """``(a, b)_g`` for 1-forms."""
        return np.einsum("ij...,i...,j...->...", self.inv, a, b)

    def tensor_dot(self, v, t):
        """``(v, t)_g = g^{ia} g^{jb} v_ij t_ab`` for 2-tensors."""
        return np.einsum("ia...,jb...,ij...,ab...->...", self.inv, self.inv, v, t)

    def trace(self, v):
        return np.einsum("ij...,ij...->...", self.inv, v)

    def upper_triangle(self):
        """Components ``g_ij, i <= j`` in row-major triangle order, shape
        ``(m(m+1)/2,) + dims``."""
        iu = np.triu_indices(self.m)
        return self.g[iu]

    @classmethod
    def from_upper_triangle(cls, grid, tri):
        m = grid.m
        g = np.empty((m, m) + grid.dims)
        iu = np.triu_indices(m)
        g[iu] = tri
        g[iu[1], iu[0]] = tri
        return cls(grid, g)


class CurvatureBundle:
    """Connection and curvature of one metric.

    ``ricci`` and ``scal`` are computed eagerly from the trace contraction
    ``Ric_jk = R^b_{bjk}`` of the coordinate formula; the full ``riemann``
    array is assembled only on first access.
    """

    def __init__(self, metric):
        self.metric = metric
        self.gamma = metric.christoffel
        self.ricci = _ricci(metric, self.gamma)
        self.scal = metric.trace(self.ricci)

    @cached_property
    def riemann(self):
        """``R^l_{ijk} = d_i Gamma^l_{jk} - d_j Gamma^l_{ik}
        + Gamma^p_{jk} Gamma^l_{ip} - Gamma^p_{ik} Gamma^l_{jp}``, assembled
        as ``A - swap_ij(A)`` so antisymmetry in ``(i, j)`` is exact."""
        gamma = self.gamma
        dgamma = grad_symmetric(self.metric.grid, gamma)     # [i, l, j, k] = d_i Gamma^l_jk
        half = np.swapaxes(dgamma, 0, 1) + np.einsum("pjk...,lip...->lijk...", gamma, gamma)
        out = half - np.swapaxes(half, 1, 2)
        out.setflags(write=False)
        return out

    def ricci_from_riemann(self):
        """``Ric(Y) = sum_i R(Y, e_i) e_i`` contracted from the full tensor,
        then lowered; agrees with ``ricci`` up to roundoff."""
        metric = self.metric
        ric_mixed = np.einsum("ab...,ljab...->lj...", metric.inv, self.riemann)
        return sym(np.einsum("kl...,lj...->jk...", metric.g, ric_mixed))


def grad_symmetric(grid, t):
    """Gradient of a field symmetric in its last two component axes; only
    the ``i <= j`` components are differentiated."""
    m = grid.m
    iu = np.triu_indices(m)
    upper = t[(Ellipsis,) + iu + (slice(None),) * m]
    d = grid.grad(upper)
    out = np.empty((m,) + t.shape)
    out[(slice(None), Ellipsis) + iu + (slice(None),) * m] = d
    out[(slice(None), Ellipsis) + iu[::-1] + (slice(None),) * m] = d
    return out


def _swap01(t):
    return np.swapaxes(t, 0, 1)


def christoffel(metric):
    """Christoffel symbols of the second kind.

    ``Gamma^l_{jk} = 1/2 g^{lp} (d_j g_pk + d_k g_pj - d_p g_jk)``, exactly
    symmetric in ``(j, k)``.
    """
    dg = metric.dg                                   # [a, i, j] = d_a g_ij
    # lowered[p, j, k] = d_j g_pk + d_k g_pj - d_p g_jk
    lowered = 0.5 * (_swap01(dg) + np.moveaxis(dg, 0, 2) - dg)
    raised = (metric.inv[:, :, None, None] * lowered[None]).sum(axis=1)
    return sym_last(raised)


def sym_last(t):
    """Symmetrize the second and third component axes of a rank-3 array."""
    return 0.5 * (t + np.swapaxes(t, 1, 2))


def _ricci(metric, gamma):
    """``Ric_jk = d_b Gamma^b_jk - d_j Gamma^b_bk + Gamma^p_jk Gamma^b_bp
    - Gamma^p_bk Gamma^b_jp``; only ``d_j Gamma^b_bk`` is not symmetric by
    construction and is symmetrized."""
    grid = metric.grid
    m = grid.m
    iu = np.triu_indices(m)
    trace = np.einsum("bbp...->p...", gamma)
    div_upper = sum(grid.diff(gamma[b][iu], b) for b in range(m))
    div = np.empty((m, m) + grid.dims)
    div[iu] = div_upper
    div[iu[::-1]] = div_upper
    quad = (trace[:, None, None] * gamma).sum(axis=0)
    # cross[j, k] = sum_{p, b} Gamma^p_bk Gamma^b_jp
    a = np.swapaxes(gamma, 0, 1)                    # a[b, p, k] = Gamma^p_bk
    c = np.swapaxes(gamma, 1, 2)                    # c[b, p, j] = Gamma^b_jp
    cross = (a[:, :, None, :] * c[:, :, :, None]).sum(axis=(0, 1))
    return sym(div - grid.grad(trace) + quad - cross)


def curvature(metric):
    """Curvature bundle (connection, Ricci, scalar; Riemann on demand)."""
    return CurvatureBundle(metric)


def volume(metric, model=None):
    """Weighted volume ``sum_nodes w sqrt(det g) * prod(spacing)``."""
    w = 1.0 if model is None else model.w
    return float(np.sum(w * metric.sqrt_det) * metric.grid.cell_volume)


def first_bianchi_residual(bundle):
    """``max |R^l_{ijk} + R^l_{jki} + R^l_{kij}|`` over nodes and indices."""
    r = bundle.riemann
    cyc = r + np.einsum("ljki...->lijk...", r) + np.einsum("lkij...->lijk...", r)
    return float(np.max(np.abs(cyc)))
