"""Transverse entropy functional and its constrained minimum.

``F(g, f) = int (Scal + |df|^2 + |kappa|^2 + 2 (kappa, df)) e^{-f} dmu``

and ``lambda(g) = min F`` over ``int e^{-f} dmu = 1``.  Two independent
backends compute ``lambda``:

``eigen``
    ground state of ``H = 4 Delta_b + S_b`` with ``S_b = Scal + |kappa|^2
    - 2 delta_b kappa`` (``Phi = e^{-f/2}``), by shifted inverse iteration
    with preconditioned CG inner solves.  Only valid in the taut class.
``minimize``
    direct quasi-Newton minimization of ``F`` written in ``Phi = e^{-f/2}``
    (a Rayleigh quotient) with the exact discrete gradient.  Valid in every
    class.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.optimize
import scipy.sparse.linalg as spla

from .calculus import d_b, delta_b, delta_w, laplacian_b, measure
from .errors import ModeUnsupported, NoConvergence
from .geometry import volume

EIGEN_TOL = 1e-10
EIGEN_MAX_ITER = 10_000
# adaptive shift: enabled below this relative residual, kept this far
# (relative) under the Rayleigh quotient
SHIFT_START = 1e-2
SHIFT_MARGIN = 1e-2
MIN_STALL_TOL = 1e-12
MIN_STALL_WINDOW = 20
MIN_MAX_ITER = 20_000


@dataclass(frozen=True, eq=False)
class EntropyReport:
    """Result of a lambda computation.

    ``F_value`` is the entropy at the returned minimizer, ``lambda_`` the
    backend's estimate of the minimum (Rayleigh quotient for ``eigen``).
    """

    F_value: float
    lambda_: float
    lambda_bar: float
    f_min: np.ndarray
    backend: str
    residual: float
    iterations: int = 0
    volume: float = field(default=float("nan"))

    @property
    def phi(self):
        return np.exp(-0.5 * self.f_min)

    def as_dict(self):
        return {
            "lambda": self.lambda_,
            "lambda_bar": self.lambda_bar,
            "F": self.F_value,
            "Vol": self.volume,
            "residual": self.residual,
            "backend": self.backend,
            "iterations": self.iterations,
        }


def _integrand(g, f, model, scal):
    df = d_b(f, g.grid)
    kappa = model.kappa
    return scal + g.dot(df, df) + g.dot(kappa, kappa) + 2.0 * g.dot(kappa, df)


def f_T(g, f, model):
    """Entropy ``F(g, f)`` by nodal quadrature against ``dmu``."""
    f = np.asarray(f, dtype=float)
    p = _integrand(g, f, model, g.curvature.scal)
    return float(np.sum(p * np.exp(-f) * measure(g, model)))


def s_T_b(g, model):
    """Schrödinger potential ``Scal + |kappa|^2 - 2 delta_b kappa``."""
    kappa = model.kappa
    return g.curvature.scal + g.dot(kappa, kappa) - 2.0 * delta_b(kappa, g, model)


def mass(g, f, model):
    """``int e^{-f} dmu``."""
    return float(np.sum(np.exp(-f) * measure(g, model)))


def normalize(g, f, model):
    """Shift ``f`` additively so that ``int e^{-f} dmu = 1``."""
    return f + np.log(mass(g, f, model))


def schrodinger_apply(phi, g, model, potential):
    """``H phi = 4 Delta_b phi + potential * phi``."""
    return 4.0 * laplacian_b(phi, g, model) + potential * phi


def _flat_preconditioner(g, model, weight, diag_shift):
    """FFT inverse of the constant-coefficient surrogate
    ``4 sum_a c_a |k_a|^2 + diag_shift`` for ``mu * (H - sigma)``."""
    grid = g.grid
    c = [float(np.mean(weight * g.inv[a, a])) for a in range(grid.m)]
    symbol = 4.0 * grid.laplacian_symbol(c) + diag_shift
    inv_symbol = 1.0 / symbol
    return lambda r: grid.fourier_multiply(r.reshape(grid.dims), inv_symbol).ravel()


def lambda_eigen(g, model, *, phi0=None, tol=EIGEN_TOL, max_iter=EIGEN_MAX_ITER):
    """Smallest eigenvalue of ``4 Delta_b + S_b`` in ``L^2(dmu)``.

    Parameters
    ----------
    g : MetricField
    model : FoliationModel
        Must be taut.
    phi0 : ndarray, optional
        Warm start (e.g. the previous ground state along a flow).
    tol : float
        Relative residual ``||H phi - lambda phi|| / (1 + |lambda|)``.
    max_iter : int
        Cap on outer plus inner iterations.

    Returns
    -------
    EntropyReport
    """
    model.require_taut("eigen backend")
    grid = g.grid
    dims = grid.dims
    mu = measure(g, model)
    potential = s_T_b(g, model)
    # H - sigma0 is positive definite because Delta_b is
    sigma0 = float(potential.min()) - 1.0
    mu_flat = mu.ravel()

    def operator(sigma):
        def apply_a(x):
            return (mu * schrodinger_apply(x.reshape(dims), g, model, potential - sigma)).ravel()

        shift_mean = float(np.mean(mu * (potential - sigma0)))
        return (spla.LinearOperator((n, n), matvec=apply_a, dtype=float),
                spla.LinearOperator((n, n), matvec=_flat_preconditioner(g, model, mu, shift_mean), dtype=float))

    def m_norm(x):
        return float(np.sqrt(np.dot(mu_flat * x, x)))

    n = grid.n_nodes
    phi = np.ones(n) if phi0 is None else np.abs(np.asarray(phi0, dtype=float)).ravel()
    phi = phi / m_norm(phi)
    sigma, adaptive = sigma0, True
    a_op, m_op = operator(sigma)
    used = 0
    lam = np.nan
    residual = np.inf
    while used < max_iter:
        h_phi = schrodinger_apply(phi.reshape(dims), g, model, potential).ravel()
        lam = float(np.dot(mu_flat * phi, h_phi))
        residual = m_norm(h_phi - lam * phi) / (1.0 + abs(lam))
        if residual <= tol:
            break
        # Once phi is positive and close to an eigenvector, move the shift
        # up to just below its Rayleigh quotient; the contraction factor
        # (lambda_0 - sigma) / (lambda_1 - sigma) then no longer depends on
        # how negative the potential gets.
        if adaptive and residual < SHIFT_START and phi.min() > 0:
            margin = (4.0 * residual + SHIFT_MARGIN) * (1.0 + abs(lam))
            if lam - margin > sigma:
                sigma = lam - margin
                a_op, m_op = operator(sigma)
        counter = _Counter()
        # the right side is M phi so that the solve applies (H - sigma)^{-1}
        nxt, info = spla.cg(a_op, mu_flat * phi, x0=phi / (lam - sigma), rtol=1e-14,
                            atol=0.0, maxiter=max_iter - used, M=m_op, callback=counter)
        used += counter.count + 1
        if sigma != sigma0 and (info < 0 or np.dot(nxt, a_op.matvec(nxt)) <= 0):
            # the shift overtook the bottom of the spectrum: fall back
            sigma, adaptive = sigma0, False
            a_op, m_op = operator(sigma)
            continue
        if info < 0:
            raise NoConvergence(f"inner CG breakdown (info={info})")
        phi = nxt / m_norm(nxt)
    else:
        raise NoConvergence(f"inverse iteration reached {max_iter} iterations, residual {residual:.3e}")

    phi = phi.reshape(dims)
    if phi.sum() < 0:
        phi = -phi
    if phi.min() <= 0:
        raise NoConvergence("ground state is not positive; iteration did not reach the bottom of the spectrum")
    f_min = normalize(g, -2.0 * np.log(phi), model)
    vol = volume(g, model)
    return EntropyReport(
        F_value=f_T(g, f_min, model),
        lambda_=lam,
        lambda_bar=lam * vol ** (2.0 / grid.m),
        f_min=f_min,
        backend="eigen",
        residual=residual,
        iterations=used,
        volume=vol,
    )


class _Counter:
    def __init__(self):
        self.count = 0

    def __call__(self, _):
        self.count += 1


def _sobolev_multiplier(grid, strength):
    """Symmetric smoothing ``(1 + strength * |k|^2)^{-1/2}`` used as a
    change of variables for the minimizer."""
    return 1.0 / np.sqrt(1.0 + strength * grid.laplacian_symbol())


def rayleigh_potential(g, model):
    """``Scal + |kappa|^2 - 2 delta_w kappa`` with the plain weighted adjoint.

    Substituting ``Phi = e^{-f/2}`` and integrating the ``(kappa, df)`` term
    by parts turns ``F`` into ``int 4 |dPhi|^2 + P Phi^2 dmu`` with this
    ``P``.  It equals ``s_T_b`` in the taut class.
    """
    kappa = model.kappa
    return g.curvature.scal + g.dot(kappa, kappa) - 2.0 * delta_w(kappa, g, model)


def rayleigh_quotient_and_gradient(phi, g, model, potential, mu=None):
    """``Q(Phi) = int (4 |dPhi|^2 + P Phi^2) / int Phi^2`` against ``dmu``
    and its exact discrete gradient with respect to the nodal values."""
    if mu is None:
        mu = measure(g, model)
    h_phi = 4.0 * delta_w(d_b(phi, g.grid), g, model) + potential * phi
    norm = float(np.sum(mu * phi * phi))
    q = float(np.sum(mu * phi * h_phi)) / norm
    return q, 2.0 * mu * (h_phi - q * phi) / norm


def lambda_minimize(g, model, *, f0=None, precondition=True, max_iter=MIN_MAX_ITER,
                    stall_tol=MIN_STALL_TOL, stall_window=MIN_STALL_WINDOW):
    """``lambda`` as the constrained minimum of ``F``.

    Minimizes ``F`` over ``Phi = e^{-f/2}`` with L-BFGS, where ``F`` becomes
    the Rayleigh quotient of ``4 Delta + P`` (see :func:`rayleigh_potential`).
    Converged when the objective changes by less than
    ``stall_tol * (1 + |F|)`` over ``stall_window`` consecutive iterations.

    Works in every mode, including a nontrivial harmonic part of kappa.

    Notes
    -----
    Minimizing the nodal ``F(f)`` directly is not safe: a wide derivative
    stencil lets ``e^{-f}`` concentrate on a single node while ``df``
    vanishes there, and the discrete infimum drops to ``min Scal``.  The
    quadratic form in ``Phi`` is bounded below by its smallest eigenvalue.
    """
    grid = g.grid
    dims = grid.dims
    mu = measure(g, model)
    potential = rayleigh_potential(g, model)
    start = np.zeros(dims) if f0 is None else np.asarray(f0, dtype=float)
    phi_start = np.exp(-0.5 * normalize(g, start, model))
    if precondition:
        mean_metric = float(np.mean(np.einsum("ii...->...", g.inv)) / grid.m)
        multiplier = _sobolev_multiplier(grid, 4.0 * mean_metric / (4.0 * np.pi**2))
    else:
        multiplier = None

    def to_phi(z):
        z = z.reshape(dims)
        return phi_start + (grid.fourier_multiply(z, multiplier) if precondition else z)

    def fun(z):
        q, grad = rayleigh_quotient_and_gradient(to_phi(z), g, model, potential, mu)
        if precondition:
            grad = grid.fourier_multiply(grad, multiplier)
        return q, grad.ravel()

    history = []

    def stalled():
        if len(history) <= stall_window:
            return False
        window = history[-stall_window - 1:]
        return max(window) - min(window) < stall_tol * (1.0 + abs(history[-1]))

    def callback(intermediate_result):
        history.append(float(intermediate_result.fun))
        if stalled():
            raise StopIteration

    result = scipy.optimize.minimize(
        fun, np.zeros(grid.n_nodes), jac=True, method="L-BFGS-B", callback=callback,
        options={"maxiter": max_iter, "maxfun": 2 * max_iter, "ftol": 0.0, "gtol": 0.0, "maxcor": 20},
    )
    # L-BFGS may stop early on a line-search failure at machine precision,
    # which is also converged for our purposes
    if not stalled() and result.nit >= max_iter:
        raise NoConvergence(f"minimizer reached {max_iter} iterations")
    phi = to_phi(result.x)
    if phi.sum() < 0:
        phi = -phi
    if phi.min() <= 0:
        raise NoConvergence("minimizer is not positive; it did not reach the ground state")
    lam, _ = rayleigh_quotient_and_gradient(phi, g, model, potential, mu)
    h_phi = 4.0 * delta_w(d_b(phi, grid), g, model) + potential * phi
    residual = float(np.sqrt(np.sum(mu * (h_phi - lam * phi) ** 2) / np.sum(mu * phi * phi))) / (1.0 + abs(lam))
    f_min = normalize(g, -2.0 * np.log(phi), model)
    vol = volume(g, model)
    return EntropyReport(
        F_value=f_T(g, f_min, model),
        lambda_=lam,
        lambda_bar=lam * vol ** (2.0 / grid.m),
        f_min=f_min,
        backend="minimize",
        residual=residual,
        iterations=int(result.nit),
        volume=vol,
    )


def compute_lambda(g, model, backend="eigen", **kwargs):
    if backend == "eigen":
        return lambda_eigen(g, model, **kwargs)
    if backend == "minimize":
        return lambda_minimize(g, model, **kwargs)
    raise ValueError(f"unknown backend {backend!r}")


def lambda_bar(g, model, backend="eigen"):
    """Scale-invariant ``lambda * Vol^{2/m}``."""
    return compute_lambda(g, model, backend).lambda_bar


def check_backend(model, backend):
    """Raise ModeUnsupported early for eigen on a non-taut model."""
    if backend == "eigen" and not model.is_taut:
        raise ModeUnsupported("eigen backend needs kappa_harmonic = 0; use backend 'minimize'")
