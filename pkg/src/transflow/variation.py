"""First variations of the entropy and the curvature, with finite-difference
counterparts.

For a metric variation ``g' = v`` with the coupled potential variation
``f' = V / 2`` (``V = tr_g v``) the measure ``e^{-f} dmu`` is fixed and

``dF = -int (v, Ric + Hess f + sym nabla kappa) e^{-f} dmu``.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .calculus import (FoliationModel, drift_laplacian, hess_b, ibp_residual, measure,
                       nabla_oneform, nabla_sym, odot)
from .entropy import f_T
from .errors import ModeUnsupported
from .geometry import MetricField, sym

DEFAULT_EPSILONS = (1e-2, 1e-3, 1e-4)
GRADIENT_TOL = 1e-5
IBP_GATE_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class PerturbationSpec:
    """A symmetric metric perturbation and the step sizes used to
    difference along it."""

    v: np.ndarray
    epsilons: tuple = DEFAULT_EPSILONS

    def __post_init__(self):
        v = sym(np.asarray(self.v, dtype=float))
        eps = tuple(float(e) for e in self.epsilons)
        if any(e <= 0 for e in eps) or any(a <= b for a, b in zip(eps, eps[1:])):
            raise ValueError("epsilons must be positive and strictly decreasing")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "epsilons", eps)

    def coupled_h(self, g):
        """``h = V / 2`` with ``V = g^{ij} v_ij``."""
        return 0.5 * g.trace(self.v)


def random_perturbation(grid, rng, amplitude=0.1, band=None):
    """Random smooth symmetric tensor with Fourier modes ``|k_a| <= band``
    (default ``dims / 4``), scaled so that ``max |v_ij| = amplitude``."""
    m = grid.m
    if band is None:
        band = min(grid.dims) // 4
    shape = grid.rfft_shape
    masks = []
    for a, n in enumerate(grid.dims):
        idx = np.fft.rfftfreq(n, 1.0 / n) if a == m - 1 else np.fft.fftfreq(n, 1.0 / n)
        s = [1] * m
        s[a] = -1
        masks.append((np.abs(idx) <= band).reshape(s))
    mask = np.logical_and.reduce(np.broadcast_arrays(*masks))
    # a gentle spectral decay keeps the sample well resolved
    decay = 1.0 / (1.0 + grid.laplacian_symbol() / (2.0 * np.pi) ** 2)
    v = np.empty((m, m) + grid.dims)
    for i in range(m):
        for j in range(i, m):
            coef = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * mask * decay
            comp = np.fft.irfftn(coef, s=grid.dims, axes=tuple(range(m)))
            v[i, j] = v[j, i] = comp
    return amplitude * v / np.max(np.abs(v))


def dF_analytic(g, f, v, model):
    """``-int (v, Ric + Hess f + sym nabla kappa)_g e^{-f} dmu``."""
    inner = g.curvature.ricci + hess_b(f, g) + nabla_oneform(model.kappa, g)
    return -float(np.sum(g.tensor_dot(v, inner) * np.exp(-f) * measure(g, model)))


def dF_numeric(g, f, v, model, eps):
    """Central difference of ``F`` along ``(g, f) -> (g + eps v, f + eps V/2)``."""
    h = 0.5 * g.trace(v)
    plus = f_T(MetricField(g.grid, g.g + eps * v), f + eps * h, model)
    minus = f_T(MetricField(g.grid, g.g - eps * v), f - eps * h, model)
    return (plus - minus) / (2.0 * eps)


def nabla2_sym(v, g):
    """Second covariant derivative ``out[a, b, i, j] = nabla_a nabla_b v_ij``."""
    t = nabla_sym(v, g)                          # t[b, i, j] = nabla_b v_ij
    gamma = g.christoffel
    d = g.grid.grad(t)
    c1 = np.einsum("pab...,pij...->abij...", gamma, t)
    c2 = np.einsum("pai...,bpj...->abij...", gamma, t)
    c3 = np.einsum("paj...,bip...->abij...", gamma, t)
    return d - c1 - c2 - c3


def dRic_analytic(g, v):
    """``1/2 g^{la} (nabla_a nabla_i v_jl + nabla_a nabla_j v_il
    - nabla_a nabla_l v_ij) - 1/2 nabla_i nabla_j V``."""
    nn = nabla2_sym(v, g)
    inv = g.inv
    t1 = np.einsum("la...,aijl...->ij...", inv, nn)
    t3 = np.einsum("la...,alij...->ij...", inv, nn)
    hess_v = hess_b(g.trace(v), g)
    return sym(0.5 * (t1 + np.swapaxes(t1, 0, 1) - t3) - 0.5 * hess_v)


def div_div(v, g):
    """``g^{ia} g^{jb} nabla_a nabla_b v_ij``."""
    nn = nabla2_sym(v, g)
    return np.einsum("ia...,jb...,abij...->...", g.inv, g.inv, nn)


def dScal_analytic(g, v, model=None):
    """``div div v - Delta'_b V - (v, Ric)``."""
    if model is None:
        model = FoliationModel.trivial(g.grid)
    big_v = g.trace(v)
    return div_div(v, g) - drift_laplacian(big_v, g, model) - g.tensor_dot(v, g.curvature.ricci)


def dScal_numeric(g, v, eps):
    plus = MetricField(g.grid, g.g + eps * v).curvature.scal
    minus = MetricField(g.grid, g.g - eps * v).curvature.scal
    return (plus - minus) / (2.0 * eps)


def dRic_numeric(g, v, eps):
    plus = MetricField(g.grid, g.g + eps * v).curvature.ricci
    minus = MetricField(g.grid, g.g - eps * v).curvature.ricci
    return (plus - minus) / (2.0 * eps)


def trace_consistency_residual(g, v, model=None):
    """``max |g^{ij} dRic_ij - (v, Ric) - dScal|``."""
    lhs = g.trace(dRic_analytic(g, v)) - g.tensor_dot(v, g.curvature.ricci)
    return float(np.max(np.abs(lhs - dScal_analytic(g, v, model))))


def observed_slopes(epsilons, errors):
    """Log-log slopes between consecutive points of an epsilon sweep."""
    le, lr = np.log10(epsilons), np.log10(np.maximum(errors, 1e-300))
    return tuple(float(x) for x in np.diff(lr) / np.diff(le))


@dataclass
class GradientCheck:
    analytic: float
    numeric: tuple
    epsilons: tuple
    rel_errors: tuple
    slopes: tuple
    status: str = "ok"

    @property
    def best_error(self):
        return min(self.rel_errors)

    def error_at(self, eps):
        return self.rel_errors[self.epsilons.index(eps)]

    def as_dict(self):
        return {
            "analytic": self.analytic,
            "sweep": [{"eps": e, "numeric": n, "rel_error": r}
                      for e, n, r in zip(self.epsilons, self.numeric, self.rel_errors)],
            "slopes": list(self.slopes),
            "status": self.status,
        }


def ibp_gate(g, model, rng, tol=IBP_GATE_TOL):
    """Integration-by-parts precondition for the variation checks.

    Returns ``(passed, residual)``; ``residual`` is None when the identity
    is not available (non-taut class).
    """
    try:
        v = random_perturbation(g.grid, rng)
        y = random_perturbation(g.grid, rng)[0]
        res = ibp_residual(v, y, g, model)
    except ModeUnsupported:
        return False, None
    return res < tol, res


def gradient_check(g, f, v, model, epsilons=DEFAULT_EPSILONS):
    spec = PerturbationSpec(v, epsilons)
    analytic = dF_analytic(g, f, spec.v, model)
    numeric = tuple(dF_numeric(g, f, spec.v, model, e) for e in spec.epsilons)
    rel = tuple(abs(n - analytic) / (1.0 + abs(analytic)) for n in numeric)
    return GradientCheck(analytic, numeric, spec.epsilons, rel, observed_slopes(spec.epsilons, rel))


@dataclass
class VariationReport:
    scenario: str
    seed: int
    gate_passed: bool
    gate_residual: float
    checks: list = field(default_factory=list)
    tolerance: float = GRADIENT_TOL

    @property
    def passed(self):
        return self.gate_passed and all(c.status == "ok" and c.best_error < self.tolerance for c in self.checks)

    def to_json(self):
        return json.dumps({
            "scenario": self.scenario,
            "seed": self.seed,
            "ibp_gate": {"passed": self.gate_passed, "residual": self.gate_residual},
            "tolerance": self.tolerance,
            "checks": [c.as_dict() for c in self.checks],
            "passed": self.passed,
        }, indent=2)


def variation_report(scenario, seed=0, n_perturbations=10, f=None, epsilons=DEFAULT_EPSILONS):
    """Gradient checks of the entropy variation for random perturbations.

    If the integration-by-parts gate fails the checks are marked
    ``blocked`` rather than evaluated as failures.
    """
    rng = np.random.default_rng(seed)
    g, model = scenario.g0, scenario.model
    if f is None:
        f = np.zeros(g.grid.dims)
    passed, residual = ibp_gate(g, model, rng)
    report = VariationReport(scenario.name, seed, passed, residual)
    for _ in range(n_perturbations):
        v = random_perturbation(g.grid, rng)
        if not passed:
            report.checks.append(GradientCheck(np.nan, (), (), (np.inf,), (), status="blocked"))
            continue
        report.checks.append(gradient_check(g, f, v, model, epsilons))
    return report


__all__ = [
    "PerturbationSpec", "random_perturbation", "dF_analytic", "dF_numeric", "dRic_analytic",
    "dScal_analytic", "dScal_numeric", "dRic_numeric", "div_div", "nabla2_sym", "odot",
    "trace_consistency_residual", "gradient_check", "variation_report", "VariationReport",
    "GradientCheck", "observed_slopes", "ibp_gate",
]
