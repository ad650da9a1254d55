"""Basic forms on the leaf-space chart and the first-order operators on them.

The foliation enters only through a :class:`FoliationModel`: the leaf
volume density ``w`` (so that the total measure is
``dmu = w sqrt(det g) dy``) and the basic mean curvature form
``kappa_b = dh + c`` with ``h = -log w`` and ``c`` a constant (harmonic)
part.  With ``c = 0`` the foliation is taut and every operator below is
(anti)self-adjoint in ``L^2(dmu)`` up to roundoff.

Sign conventions: ``laplacian_b`` is the positive operator ``delta_b d_b``;
``drift_laplacian`` is ``-laplacian_b + tau_b`` with ``tau_b f = (kappa_b, df)``.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ModeUnsupported
from .geometry import sym


@dataclass(frozen=True, eq=False)
class FoliationModel:
    """Leaf density and basic mean curvature on a chart grid.

    Build with :meth:`from_density`, :meth:`from_potential` or
    :meth:`trivial`; the three fields are kept mutually consistent
    (``h = -log w``).
    """

    grid: object
    w: np.ndarray
    kappa_exact_potential: np.ndarray
    kappa_harmonic: np.ndarray

    def __post_init__(self):
        grid = self.grid
        w = np.ascontiguousarray(self.w, dtype=float)
        h = np.ascontiguousarray(self.kappa_exact_potential, dtype=float)
        c = np.asarray(self.kappa_harmonic, dtype=float).reshape(grid.m)
        if w.shape != grid.dims or h.shape != grid.dims:
            raise ValueError("density and potential must be scalar fields on the grid")
        if not np.all(np.isfinite(w)) or w.min() <= 0:
            raise ValueError("leaf density must be finite and positive")
        if np.max(np.abs(h + np.log(w))) > 1e-12 * (1.0 + np.max(np.abs(h))):
            raise ValueError("kappa potential must equal -log(w)")
        for a in (w, h, c):
            a.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "kappa_exact_potential", h)
        object.__setattr__(self, "kappa_harmonic", c)

    @classmethod
    def trivial(cls, grid):
        return cls(grid, np.ones(grid.dims), np.zeros(grid.dims), np.zeros(grid.m))

    @classmethod
    def from_potential(cls, grid, h, harmonic=None):
        h = np.asarray(h, dtype=float)
        c = np.zeros(grid.m) if harmonic is None else harmonic
        return cls(grid, np.exp(-h), h, c)

    @classmethod
    def from_density(cls, grid, w, harmonic=None):
        w = np.asarray(w, dtype=float)
        c = np.zeros(grid.m) if harmonic is None else harmonic
        return cls(grid, w, -np.log(w), c)

    @property
    def h(self):
        return self.kappa_exact_potential

    @property
    def is_taut(self):
        """Taut iff the class of kappa_b is trivial, i.e. no harmonic part."""
        return not np.any(self.kappa_harmonic)

    @cached_property
    def kappa(self):
        """``kappa_b = dh + c`` as a 1-form field."""
        k = self.grid.grad(self.h)
        k += self.kappa_harmonic.reshape((self.grid.m,) + (1,) * self.grid.m)
        k.setflags(write=False)
        return k

    def require_taut(self, what):
        if not self.is_taut:
            raise ModeUnsupported(f"{what} needs kappa_harmonic = 0 (taut class)")


# -- measure and inner products ---------------------------------------------

def measure(metric, model):
    """Nodal weights of ``dmu = w sqrt(det g) dy`` (the quadrature rule)."""
    return model.w * metric.sqrt_det * metric.grid.cell_volume


def integrate(values, metric, model):
    return float(np.sum(values * measure(metric, model)))


def inner_w(a, b, metric, model):
    """Weighted L^2 product of two fields of equal rank (0, 1 or 2)."""
    rank = a.ndim - metric.grid.m
    if rank == 0:
        pointwise = a * b
    elif rank == 1:
        pointwise = metric.dot(a, b)
    else:
        pointwise = metric.tensor_dot(a, b)
    return integrate(pointwise, metric, model)


def odot(a, b):
    """Symmetrized product ``a . b = 1/2 (a (x) b + b (x) a)`` of 1-forms."""
    return 0.5 * (a[:, None] * b[None, :] + b[:, None] * a[None, :])


# -- operators -----------------------------------------------------------------

def d_b(f, grid):
    """Exterior derivative of a basic function: ``(df)_i = d_i f``."""
    return grid.grad(f)


def delta_w(alpha, metric, model):
    """Weighted divergence ``-(1/(w sqrt g)) d_i(w sqrt g g^{ij} alpha_j)``,
    the exact discrete adjoint of ``d_b`` in ``L^2(dmu)``."""
    weight = model.w * metric.sqrt_det
    return -metric.grid.div(weight * metric.raise_index(alpha)) / weight


def delta_b(alpha, metric, model):
    """Twisted codifferential of a basic 1-form, ``delta_w alpha + (c, alpha)_g``."""
    out = delta_w(alpha, metric, model)
    if not model.is_taut:
        c = model.kappa_harmonic.reshape((metric.m,) + (1,) * metric.m) * np.ones(metric.grid.dims)
        out = out + metric.dot(c, alpha)
    return out


def laplacian_b(f, metric, model):
    """Basic Laplacian on functions, ``delta_b d_b f`` (positive operator)."""
    return delta_b(d_b(f, metric.grid), metric, model)


def tau_b(f, metric, model):
    """Derivative along the mean curvature field, ``(kappa_b, df)_g``."""
    return metric.dot(model.kappa, d_b(f, metric.grid))


def drift_laplacian(f, metric, model):
    """``-Delta_b f + (kappa_b, df)_g``."""
    return -laplacian_b(f, metric, model) + tau_b(f, metric, model)


def nabla_oneform(alpha, metric, symmetrize=True):
    """Covariant derivative ``(nabla alpha)_ij = d_i alpha_j - Gamma^k_ij alpha_k``.

    Returns the symmetric part by default; pass ``symmetrize=False`` for the
    full (0, 2) tensor.
    """
    gamma = metric.christoffel
    full = metric.grid.grad(alpha) - np.einsum("kij...,k...->ij...", gamma, alpha)
    return sym(full) if symmetrize else full


def hess_b(f, metric):
    """Hessian ``d_i d_j f - Gamma^k_ij d_k f``, exactly symmetric."""
    return nabla_oneform(d_b(f, metric.grid), metric)


def nabla_sym(v, metric):
    """Covariant derivative of a symmetric 2-tensor,
    ``out[i, k, j] = d_i v_kj - Gamma^p_ik v_pj - Gamma^p_ij v_kp``."""
    gamma = metric.christoffel
    corr = np.einsum("pik...,pj...->ikj...", gamma, v)
    return metric.grid.grad(v) - corr - np.swapaxes(corr, 1, 2)


def div_sym(v, metric, model=None):
    """Divergence of a symmetric 2-tensor, ``g^{ik} (nabla_i v)_{kj}``.

    ``model`` is accepted for interface symmetry; the trace divergence does
    not depend on the leaf density.
    """
    return np.einsum("ik...,ikj...->j...", metric.inv, nabla_sym(v, metric))


def delta_T_kappa(model, metric):
    """Trace divergence ``g^{ij} (nabla kappa_b)_ij`` (no weight, no sign flip)."""
    return metric.trace(nabla_oneform(model.kappa, metric, symmetrize=False))


def ibp_residual(v, Y, metric, model):
    """Relative defect of the integration-by-parts identity

    ``int (div v, Y) = int (v, Y . kappa_b) - int (v, nabla Y)``

    with all integrals against ``dmu``.  Returns ``|lhs - rhs| / (1 + |lhs|)``.
    """
    model.require_taut("integration by parts")
    lhs = inner_w(div_sym(v, metric), Y, metric, model)
    rhs = inner_w(v, odot(Y, model.kappa), metric, model) - inner_w(
        v, nabla_oneform(Y, metric, symmetrize=False), metric, model
    )
    return abs(lhs - rhs) / (1.0 + abs(lhs))
