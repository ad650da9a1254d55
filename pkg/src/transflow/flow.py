"""Time integration of the transverse flows and their diagnostics.

Three systems are integrated with classical RK4:

``ricci``     ``g' = -2 Ric``
``gradient``  ``g' = -2 (Ric + Hess f + sym nabla kappa)``,
              ``f' = -Scal - Delta'_b f - delta^T kappa``
``gauged``    ``g' = -2 Ric``,
              ``f' = -Scal - Delta'_b f + |df|^2 + (kappa, df) - delta^T kappa``

The ``f`` equations are backward parabolic, so only short horizons with a
small CFL factor are meaningful for the coupled systems.  Substituting
``u = e^{-f}`` in the gauged system gives the conjugate heat equation
``u' = Delta_b u + (Scal + delta^T kappa) u``, which is integrated
separately (well posed in reversed time) by :func:`solve_conjugate_heat`.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse.linalg as spla

from .calculus import d_b, delta_T_kappa, drift_laplacian, hess_b, laplacian_b, measure, nabla_oneform
from .entropy import compute_lambda, f_T, mass, normalize
from .errors import NoConvergence, NonPositive, SingularMetric
from .geometry import MetricField, volume

FLOW_KINDS = ("ricci", "gradient", "gauged")
DEFAULT_CFL = {"ricci": 0.1, "gradient": 0.005, "gauged": 0.005}
MONOTONE_TOL = 1e-7
SERIES_HEADER = ("t", "lambda", "lambda_bar", "F", "Vol", "mass", "min_det_g")


@dataclass(frozen=True)
class DiagnosticRow:
    t: float
    lambda_: float
    lambda_bar: float
    F: float
    Vol: float
    mass: float
    min_det_g: float

    def as_tuple(self):
        return (self.t, self.lambda_, self.lambda_bar, self.F, self.Vol, self.mass, self.min_det_g)


@dataclass(frozen=True, eq=False)
class FlowState:
    """Snapshot of a flow.

    For ``ricci`` runs ``f`` holds the most recent entropy minimizer (it
    warm-starts the next eigensolve); for the coupled systems it is the
    evolving potential.
    """

    kind: str
    g: MetricField
    model: object
    f: np.ndarray
    t: float = 0.0
    step: int = 0
    dt: float = 0.0

    @property
    def u(self):
        return np.exp(-self.f)

    @property
    def grid(self):
        return self.g.grid


def initial_state(kind, g, model, f=None, dt=None, cfl=None):
    """State at ``t = 0``; ``f`` defaults to the normalized constant."""
    if kind not in FLOW_KINDS:
        raise ValueError(f"unknown flow kind {kind!r}")
    if f is None:
        f = np.zeros(g.grid.dims)
    f = normalize(g, np.asarray(f, dtype=float), model)
    if dt is None:
        dt = cfl_dt(g, DEFAULT_CFL[kind] if cfl is None else cfl)
    return FlowState(kind=kind, g=g, model=model, f=f, dt=dt)


def cfl_dt(g, cfl=0.1):
    """``cfl * h_min^2 / max_nodes tr(g^{-1})``; the trace bounds the
    principal coefficient of the linearized operators."""
    h_min = min(g.grid.spacing)
    return cfl * h_min**2 / float(np.max(np.einsum("ii...->...", g.inv)))


# -- right-hand sides --------------------------------------------------------

def rhs(kind, g, f, model):
    """Time derivatives ``(dg/dt, df/dt)`` of the chosen system."""
    ric = g.curvature.ricci
    if kind == "ricci":
        return -2.0 * ric, None
    scal = g.curvature.scal
    dtk = delta_T_kappa(model, g)
    if kind == "gradient":
        dg = -2.0 * (ric + hess_b(f, g) + nabla_oneform(model.kappa, g))
        df = -scal - drift_laplacian(f, g, model) - dtk
        return dg, df
    if kind == "gauged":
        grad_f = d_b(f, g.grid)
        df = (-scal - drift_laplacian(f, g, model) + g.dot(grad_f, grad_f)
              + g.dot(model.kappa, grad_f) - dtk)
        return -2.0 * ric, df
    raise ValueError(f"unknown flow kind {kind!r}")


def conjugate_heat_rhs(g, u, model):
    """``Delta_b u + (Scal + delta^T kappa) u``."""
    return laplacian_b(u, g, model) + (g.curvature.scal + delta_T_kappa(model, g)) * u


def _rk4(kind, g, f, model, dt):
    grid = g.grid
    coupled = kind != "ricci"

    def stage(g_base, f_base, k, scale):
        gs = MetricField(grid, g_base.g + scale * k[0])
        fs = f_base + scale * k[1] if coupled else None
        return gs, fs

    k1 = rhs(kind, g, f, model)
    k2 = rhs(kind, *stage(g, f, k1, 0.5 * dt), model)
    k3 = rhs(kind, *stage(g, f, k2, 0.5 * dt), model)
    k4 = rhs(kind, *stage(g, f, k3, dt), model)
    g_inc = grid.filter_high_modes(dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]))
    g_new = MetricField(grid, g.g + g_inc)
    if coupled:
        f_new = f + grid.filter_high_modes(dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]))
    else:
        f_new = f
    return g_new, f_new


def step(state, dt=None):
    """One RK4 step of the state's own flow kind."""
    dt = state.dt if dt is None else dt
    g_new, f_new = _rk4(state.kind, state.g, state.f, state.model, dt)
    if not np.all(np.isfinite(f_new)):
        raise SingularMetric("potential f became non-finite")
    return replace(state, g=g_new, f=f_new, step=state.step + 1, t=(state.step + 1) * dt, dt=dt)


def step_ricci(state, dt=None):
    return step(replace(state, kind="ricci"), dt)


def step_gradient(state, dt=None):
    return step(replace(state, kind="gradient"), dt)


def step_gauged(state, dt=None):
    return step(replace(state, kind="gauged"), dt)


# -- diagnostics ----------------------------------------------------------------

def diagnose(state, backend="eigen", with_lambda=True):
    """Diagnostic row for ``state``; for ricci runs the state's ``f`` is
    replaced by the fresh entropy minimizer."""
    g, model = state.g, state.model
    lam = lam_bar = math.nan
    f = state.f
    if with_lambda:
        kw = {"phi0": np.exp(-0.5 * state.f)} if backend == "eigen" else {"f0": state.f}
        rep = compute_lambda(g, model, backend, **kw)
        lam, lam_bar = rep.lambda_, rep.lambda_bar
        if state.kind == "ricci":
            f = rep.f_min
            state = replace(state, f=f)
    row = DiagnosticRow(
        t=state.t,
        lambda_=lam,
        lambda_bar=lam_bar,
        F=f_T(g, f, model),
        Vol=volume(g, model),
        mass=mass(g, f, model),
        min_det_g=float(g.det.min()),
    )
    return state, row


@dataclass
class RunResult:
    state: FlowState
    rows: list
    status: str = "ok"
    diagnostic: dict = field(default_factory=dict)


def n_steps_for(T, dt):
    return max(1, int(math.ceil(T / dt - 1e-9)))


def run(state, n_steps, *, lambda_every=10, backend="eigen", checkpoint_every=None,
        on_checkpoint=None, on_row=None, on_step=None):
    """Advance ``state`` until ``state.step == n_steps``.

    A diagnostic row is produced at step 0 (unless resuming), every
    ``lambda_every`` steps and at the final step.  ``on_checkpoint(state)``
    fires every ``checkpoint_every`` steps, after that step's row.  A
    SingularMetric is caught and reported with ``status = "blowup"``.
    """
    rows = []

    def emit(st):
        st, row = diagnose(st, backend)
        rows.append(row)
        if on_row is not None:
            on_row(row)
        return st

    if state.step == 0:
        state = emit(state)
    try:
        while state.step < n_steps:
            state = step(state)
            if on_step is not None:
                on_step(state)
            if state.step % lambda_every == 0 or state.step == n_steps:
                state = emit(state)
            if checkpoint_every and on_checkpoint is not None and state.step % checkpoint_every == 0:
                on_checkpoint(state)
    except SingularMetric as e:
        return RunResult(state, rows, "blowup", {
            "error": "SingularMetric", "message": str(e), "t": state.t, "step": state.step,
            "min_det_g": float(state.g.det.min()),
        })
    return RunResult(state, rows)


# -- monotonicity ------------------------------------------------------------------

@dataclass(frozen=True)
class MonotonicityReport:
    deltas: tuple
    min_delta: float
    violations: tuple
    bar_deltas: tuple
    bar_predicate_active: bool
    bar_violations: tuple

    @property
    def ok(self):
        return not self.violations and not self.bar_violations


def monitor(rows, taut=True, rel_tol=MONOTONE_TOL):
    """Check weak monotonicity of lambda and the conditional lambda-bar claim.

    A consecutive delta counts as a violation when it is below
    ``-rel_tol * (1 + max(|a|, |b|))``.  The lambda-bar predicate applies
    only for taut models, from the first row with ``lambda_bar <= 0`` on.
    """
    rows = [r for r in rows if not math.isnan(r.lambda_)]
    if len(rows) < 3:
        raise ValueError("monotonicity needs at least 3 rows with lambda")
    lam = np.array([r.lambda_ for r in rows])
    bar = np.array([r.lambda_bar for r in rows])

    def deltas_and_bad(x, start=0):
        d = np.diff(x)
        tol = rel_tol * (1.0 + np.maximum(np.abs(x[:-1]), np.abs(x[1:])))
        bad = tuple(int(i) for i in np.nonzero(d < -tol)[0] if i >= start)
        return d, bad

    d, bad = deltas_and_bad(lam)
    bd, _ = deltas_and_bad(bar)
    nonpos = np.nonzero(bar <= 0)[0]
    active = bool(taut and nonpos.size)
    bar_bad = deltas_and_bad(bar, int(nonpos[0]))[1] if active else ()
    return MonotonicityReport(
        deltas=tuple(float(x) for x in d),
        min_delta=float(d.min()),
        violations=bad,
        bar_deltas=tuple(float(x) for x in bd),
        bar_predicate_active=active,
        bar_violations=bar_bad,
    )


# -- conjugate heat equation -----------------------------------------------------------

def _potential(g, model):
    return g.curvature.scal + delta_T_kappa(model, g)


def solve_conjugate_heat(g_path, times, u_T, model, *, cg_rtol=1e-13, cg_maxiter=10_000):
    """Integrate ``du/dt = Delta_b u + (Scal + delta^T kappa) u`` backward
    from ``u(T) = u_T`` along a stored metric path.

    Runs forward in ``s = T - t`` with Strang splitting: exact exponential
    half steps in the potential around a Crank-Nicolson diffusion step,
    whose linear system is solved by CG (the operator is symmetric in the
    ``dmu`` inner product of the newer metric).

    Parameters
    ----------
    g_path : sequence of MetricField
        Metrics at ``times`` (increasing).
    times : sequence of float
    u_T : ndarray
        Positive terminal data.
    model : FoliationModel

    Returns
    -------
    list of ndarray
        ``u`` at every entry of ``times``.
    """
    model.require_taut("conjugate heat solver")
    if len(g_path) != len(times):
        raise ValueError("g_path and times must have equal length")
    u = np.asarray(u_T, dtype=float).copy()
    if u.min() <= 0:
        raise NonPositive("terminal data must be positive")
    grid = g_path[0].grid
    n = grid.n_nodes
    dims = grid.dims
    out = [None] * len(times)
    out[-1] = u.copy()
    pot_next = _potential(g_path[-1], model)
    for i in range(len(times) - 1, 0, -1):
        ds = float(times[i] - times[i - 1])
        g_old, g_new = g_path[i], g_path[i - 1]
        pot_old, pot_next = pot_next, _potential(g_new, model)
        u = np.exp(-0.5 * ds * pot_old) * u
        rhs_vec = u - 0.5 * ds * laplacian_b(u, g_old, model)
        mu = measure(g_new, model)

        def apply(x, g_new=g_new, mu=mu, ds=ds):
            x = x.reshape(dims)
            return (mu * (x + 0.5 * ds * laplacian_b(x, g_new, model))).ravel()

        op = spla.LinearOperator((n, n), matvec=apply, dtype=float)
        u_flat, info = spla.cg(op, (mu * rhs_vec).ravel(), x0=u.ravel(), rtol=cg_rtol,
                               atol=0.0, maxiter=cg_maxiter)
        if info > 0:
            raise NoConvergence(f"conjugate heat CG did not converge at t = {times[i - 1]}")
        u = np.exp(-0.5 * ds * pot_next) * u_flat.reshape(dims)
        if u.min() <= 0:
            raise NonPositive(f"u lost positivity at t = {times[i - 1]} (min {u.min():.3e})")
        out[i - 1] = u.copy()
    return out
