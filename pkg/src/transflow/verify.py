"""Verification suites behind ``transflow verify``.

Every check yields a :class:`Check` row (name, value, tolerance, pass flag).
Suites: ``operators``, ``entropy``, ``variation``, ``flow``; ``all`` runs
them in that order.  Convergence rows compare two resolutions and expect
the order of the grid's differencing scheme.
"""

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import calculus as calc
from . import checkpoint as ckpt
from . import entropy, flow, variation
from .geometry import MetricField, first_bianchi_residual
from .scenarios import build

SUITES = ("operators", "entropy", "variation", "flow")
# expected error ratio under grid doubling, per scheme; None means the
# scheme converges spectrally and errors sit at the roundoff floor
ORDER_RATIO = {"fd2": (3.0, 5.0), "fd4": (12.0, 20.0), "spectral": None}
ROUNDOFF_FLOOR = 1e-8


@dataclass
class Check:
    suite: str
    name: str
    value: float
    tolerance: str
    passed: bool

    def row(self):
        return f"{self.suite:10s} {self.name:48s} {self.value:13.6e}  {self.tolerance:22s} {'PASS' if self.passed else 'FAIL'}"


def _le(suite, name, value, tol):
    value = float(value)
    return Check(suite, name, value, f"<= {tol:g}", bool(value <= tol))


def _ge(suite, name, value, tol):
    value = float(value)
    return Check(suite, name, value, f">= {tol:g}", bool(value >= tol))


def convergence_check(suite, name, coarse, fine, scheme):
    """Ratio row: ``coarse / fine`` must match the scheme's order, unless
    both errors already sit at the roundoff floor (the identity then holds
    exactly in the discretization and the ratio carries no information)."""
    ratio = coarse / fine if fine > 0 else math.inf
    at_floor = max(coarse, fine) <= ROUNDOFF_FLOOR
    band = ORDER_RATIO[scheme]
    if band is None:
        ok = at_floor or ratio >= 3.0
        return Check(suite, name, ratio, f"floor {ROUNDOFF_FLOOR:g} or >= 3", bool(ok))
    lo, hi = band
    return Check(suite, name, ratio, f"floor {ROUNDOFF_FLOOR:g} or in [{lo:g}, {hi:g}]",
                 bool(at_floor or lo <= ratio <= hi))


def smooth_field(grid, rng, n_modes=4):
    """Random trigonometric polynomial with a few low modes."""
    coords = grid.coords()
    out = np.zeros(grid.dims)
    for _ in range(n_modes):
        k = rng.integers(-3, 4, size=grid.m)
        phase = rng.uniform(0, 2 * np.pi)
        arg = sum(2 * np.pi * kk * c / p for kk, c, p in zip(k, coords, grid.periods))
        out += rng.standard_normal() * np.cos(arg + phase)
    return out


def smooth_oneform(grid, rng):
    return np.stack([smooth_field(grid, rng) for _ in range(grid.m)])


def conformal_scal_error(dims, scheme="spectral"):
    """``max |Scal - 2K|`` on conformal-taut, ``K = -e^{-2u} Delta_0 u`` by
    exact differentiation of the analytic ``u``."""
    sc = build("conformal-taut", dims, scheme)
    x, y = sc.grid.coords()
    a = 2 * np.pi
    amp = 0.1
    lap_u = -2 * a**2 * amp * np.sin(a * x) * np.cos(a * y)
    u = amp * np.sin(a * x) * np.cos(a * y)
    k = -np.exp(-2 * u) * lap_u
    return float(np.max(np.abs(sc.g0.curvature.scal - 2 * k)))


def bianchi_residuals(dims, scheme="spectral"):
    sc = build("conformal-taut", dims, scheme)
    g = sc.g0
    cb = g.curvature
    contracted = calc.div_sym(cb.ricci, g) - 0.5 * sc.grid.grad(cb.scal)
    return first_bianchi_residual(cb), float(np.max(np.abs(contracted)))


def ibp_fixed_residual(dims, scheme="spectral", scenario="weighted-exact"):
    """Integration-by-parts defect for a fixed smooth ``(v, Y)`` pair.

    On a flat chart every scheme satisfies the identity to roundoff
    (summation by parts); on a curved metric the finite-difference schemes
    show their truncation order.
    """
    sc = build(scenario, dims, scheme)
    grid = sc.grid
    x, y = grid.coords()
    a = 2 * np.pi
    v = np.empty((2, 2) + grid.dims)
    v[0, 0] = np.sin(a * y) + 0.5 * np.cos(a * (x + y))
    v[0, 1] = v[1, 0] = np.cos(a * x) * np.sin(2 * a * y)
    v[1, 1] = 1.0 + 0.3 * np.sin(a * x)
    big_y = np.stack([np.cos(a * y) * np.sin(a * x), np.sin(a * (x + 2 * y))])
    return calc.ibp_residual(v, big_y, sc.g0, sc.model)


def operators_suite(dims=32, seed=0, scenario="flat-taut", scheme="spectral", refine_dims=None):
    s = "operators"
    rng = np.random.default_rng(seed)
    sc = build(scenario, dims, scheme)
    g, model, grid = sc.g0, sc.model, sc.grid
    out = []
    # finite-difference residuals are truncation-limited: judge them by
    # their order under refinement rather than by an absolute bound
    spectral = scheme == "spectral"
    if not spectral and refine_dims is None:
        refine_dims = 2 * dims
    if model.is_taut:
        worst = 0.0
        for _ in range(100):
            f, alpha = smooth_field(grid, rng), smooth_oneform(grid, rng)
            lhs = calc.inner_w(calc.d_b(f, grid), alpha, g, model)
            rhs = calc.inner_w(f, calc.delta_b(alpha, g, model), g, model)
            scale = math.sqrt(calc.inner_w(f, f, g, model) * calc.inner_w(alpha, alpha, g, model))
            worst = max(worst, abs(lhs - rhs) / scale)
        out.append(_le(s, "adjointness d_b / delta_b (100 pairs)", worst, 1e-10))
        f = smooth_field(grid, rng)
        q = calc.inner_w(calc.laplacian_b(f, g, model), f, g, model) / calc.inner_w(f, f, g, model)
        out.append(_ge(s, "Delta_b positive semidefinite", q, -1e-10))
        v = variation.random_perturbation(grid, rng)
        y = smooth_oneform(grid, rng)
        if spectral:
            out.append(_le(s, "integration by parts residual", calc.ibp_residual(v, y, g, model), 1e-8))
    kappa = model.kappa
    dk = grid.diff(kappa[1], 0) - grid.diff(kappa[0], 1)
    out.append(_le(s, "d kappa_b = 0", np.max(np.abs(dk)), 1e-12))
    cb = g.curvature
    out.append(_le(s, "Gamma symmetric in (j, k)", np.max(np.abs(cb.gamma - np.swapaxes(cb.gamma, 1, 2))), 0.0))
    out.append(_le(s, "Riemann antisymmetric in (i, j)", np.max(np.abs(cb.riemann + np.swapaxes(cb.riemann, 1, 2))), 0.0))
    out.append(_le(s, "Scal = tr_g Ric", np.max(np.abs(cb.scal - g.trace(cb.ricci))), 1e-12))
    if grid.m == 2:
        out.append(_le(s, "2D: Ric = Scal g / 2", np.max(np.abs(cb.ricci - 0.5 * cb.scal * g.g)) / (1 + np.max(np.abs(cb.scal))), 1e-8))
    out.append(_le(s, "first Bianchi residual", first_bianchi_residual(cb), 1e-8))
    if spectral:
        contracted = calc.div_sym(cb.ricci, g) - 0.5 * grid.grad(cb.scal)
        out.append(_le(s, "contracted second Bianchi residual", np.max(np.abs(contracted)), 1e-6))
    tr_hess = g.trace(calc.hess_b(f := smooth_field(grid, rng), g))
    out.append(_le(s, "tr Hess f = Delta'_b f", np.max(np.abs(tr_hess - calc.drift_laplacian(f, g, model))), 1e-6))
    if refine_dims:
        e1, e2 = conformal_scal_error(dims, scheme), conformal_scal_error(refine_dims, scheme)
        out.append(convergence_check(s, f"Scal vs 2K ratio {dims}->{refine_dims}", e1, e2, scheme))
        (b1, c1), (b2, c2) = bianchi_residuals(dims, scheme), bianchi_residuals(refine_dims, scheme)
        out.append(convergence_check(s, f"first Bianchi ratio {dims}->{refine_dims}", b1, b2, scheme))
        out.append(convergence_check(s, f"contracted Bianchi ratio {dims}->{refine_dims}", c1, c2, scheme))
        for name in ("weighted-exact", "conformal-taut"):
            i1, i2 = ibp_fixed_residual(dims, scheme, name), ibp_fixed_residual(refine_dims, scheme, name)
            out.append(convergence_check(s, f"integration by parts ratio {name} {dims}->{refine_dims}",
                                         i1, i2, scheme))
    return out


def entropy_suite(dims=32, seed=0, scheme="spectral", refine_dims=None):
    s = "entropy"
    out = []
    flat = build("flat-taut", dims, scheme)
    out.append(_le(s, "flat-taut lambda = 0", abs(entropy.lambda_eigen(flat.g0, flat.model).lambda_), 1e-8))
    sc = build("weighted-exact", dims, scheme)
    eig = entropy.lambda_eigen(sc.g0, sc.model)
    mini = entropy.lambda_minimize(sc.g0, sc.model)
    lam = eig.lambda_
    out.append(_le(s, "weighted-exact eigen vs minimize", abs(eig.lambda_ - mini.lambda_) / (1 + abs(lam)), 1e-6))
    out.append(_le(s, "Rayleigh consistency F(f_min) = lambda",
                   abs(entropy.f_T(sc.g0, eig.f_min, sc.model) - lam) / (1 + abs(lam)), 1e-8))
    out.append(_le(s, "constraint int e^{-f_min} = 1",
                   abs(entropy.mass(sc.g0, eig.f_min, sc.model) - 1.0), 1e-10))
    out.append(_ge(s, "ground state positive (min Phi)", float(eig.phi.min()), 1e-300))
    out.append(_le(s, "eigen residual", eig.residual, entropy.EIGEN_TOL))
    conf = build("conformal-taut", dims, scheme)
    base = entropy.lambda_eigen(conf.g0, conf.model).lambda_bar
    for c in (0.5, 2.0, 10.0):
        scaled = entropy.lambda_eigen(conf.g0.scaled(c), conf.model).lambda_bar
        out.append(_le(s, f"lambda_bar scale invariance c={c:g}", abs(scaled - base) / (1 + abs(base)), 1e-8))
    shifted = MetricField(conf.grid, np.roll(conf.g0.g, 3, axis=-1))
    lam_shift = entropy.lambda_eigen(shifted, conf.model).lambda_
    lam_conf = entropy.lambda_eigen(conf.g0, conf.model).lambda_
    out.append(_le(s, "translation invariance of lambda", abs(lam_shift - lam_conf) / (1 + abs(lam_conf)), 1e-10))
    tw = build("twisted-nontaut", dims, scheme)
    rng = np.random.default_rng(seed)
    values = []
    for _ in range(5):
        f0 = 0.3 * smooth_field(tw.grid, rng)
        values.append(entropy.lambda_minimize(tw.g0, tw.model, f0=f0).lambda_)
    out.append(_le(s, "twisted-nontaut multi-start spread", max(values) - min(values), 1e-6))
    return out


def _scal_sweep_field(grid):
    x, y = grid.coords()
    a = 2 * np.pi
    v = np.empty((2, 2) + grid.dims)
    v[0, 0] = 0.1 * np.sin(a * x) * np.cos(a * y)
    v[0, 1] = v[1, 0] = 0.05 * np.cos(a * (x + y))
    v[1, 1] = 0.1 * np.sin(2 * a * y)
    return v


def dscal_error(dims, eps, scheme="spectral"):
    sc = build("conformal-taut", dims, scheme)
    v = _scal_sweep_field(sc.grid)
    return float(np.max(np.abs(variation.dScal_numeric(sc.g0, v, eps) - variation.dScal_analytic(sc.g0, v, sc.model))))


def variation_suite(dims=32, seed=0, scheme="spectral", n_perturbations=10):
    s = "variation"
    out = []
    for name in ("conformal-taut", "weighted-exact"):
        sc = build(name, dims, scheme)
        rep = variation.variation_report(sc, seed=seed, n_perturbations=n_perturbations)
        out.append(_ge(s, f"{name}: integration-by-parts gate", float(rep.gate_passed), 1.0))
        worst = max(c.error_at(1e-4) for c in rep.checks)
        out.append(_le(s, f"{name}: dF rel. error at eps=1e-4 (worst)", worst, variation.GRADIENT_TOL))
        slope = min(min(c.slopes[0], 2.5) for c in rep.checks)
        out.append(Check(s, f"{name}: eps-slope 1e-2..1e-3 (min)", slope, "in [1.8, 2.2]", bool(1.8 <= slope <= 2.2)))
    e = [dscal_error(dims, eps, scheme) for eps in (1e-2, 5e-3)]
    out.append(Check(s, "dScal eps-halving ratio", e[0] / e[1], "in [3, 5]", bool(3 <= e[0] / e[1] <= 5)))
    sc = build("conformal-taut", dims, scheme)
    out.append(_le(s, "trace consistency dRic / dScal",
                   variation.trace_consistency_residual(sc.g0, _scal_sweep_field(sc.grid), sc.model), 1e-5))
    return out


def gauged_residual(dims, dt, n_steps=2, scheme="spectral"):
    """``max |du/dt - Delta_b u - (Scal + delta^T kappa) u|`` at the middle
    of a short gauged run, ``du/dt`` by centered differencing."""
    sc = build("conformal-taut", dims, scheme)
    x, y = sc.grid.coords()
    f0 = 0.2 * np.cos(2 * np.pi * x) * np.sin(2 * np.pi * y)
    state = flow.initial_state("gauged", sc.g0, sc.model, f=f0, dt=dt)
    states = [state]
    for _ in range(n_steps):
        states.append(flow.step(states[-1]))
    mid = states[n_steps // 2]
    du = (states[n_steps // 2 + 1].u - states[n_steps // 2 - 1].u) / (2 * dt)
    return float(np.max(np.abs(du - flow.conjugate_heat_rhs(mid.g, mid.u, mid.model))))


def ricci_path(scenario, T, n_steps):
    """Stored metric path of a Ricci run with ``n_steps`` steps to ``T``."""
    state = flow.FlowState("ricci", scenario.g0, scenario.model, np.zeros(scenario.grid.dims), dt=T / n_steps)
    path, times = [state.g], [0.0]
    for _ in range(n_steps):
        state = flow.step(state)
        path.append(state.g)
        times.append(state.t)
    return path, times


def flow_suite(dims=32, seed=0, scheme="spectral"):
    s = "flow"
    out = []
    flat = build("flat-taut", dims, scheme)
    st = flow.initial_state("ricci", flat.g0, flat.model)
    g0 = st.g.g
    for _ in range(100):
        st = flow.step(st)
    out.append(_le(s, "flat metric is a fixed point (100 steps)", np.max(np.abs(st.g.g - g0)), 1e-12))
    conf = build("conformal-taut", dims, scheme)
    st = flow.initial_state("ricci", conf.g0, conf.model)
    n = 200
    res = flow.run(st, n, lambda_every=20)
    g = res.state.g.g
    aniso = max(np.max(np.abs(g[0, 1])), np.max(np.abs(g[0, 0] - g[1, 1])))
    out.append(_le(s, "2D conformality preserved", aniso, 1e-8))
    rep = flow.monitor(res.rows, taut=True)
    out.append(_ge(s, "lambda weakly increasing (min delta)", rep.min_delta,
                   -flow.MONOTONE_TOL * (1 + max(abs(r.lambda_) for r in res.rows))))
    out.append(_ge(s, "lambda_bar predicate violations (negated)", -len(rep.bar_violations), 0))
    dt0 = 4e-5 * (32 / dims) ** 2
    r1, r2 = gauged_residual(dims, dt0, scheme=scheme), gauged_residual(dims, dt0 / 2, scheme=scheme)
    out.append(Check(s, "gauged u-residual step-halving ratio", r1 / r2, "in [3, 5]", bool(3 <= r1 / r2 <= 5)))
    path, times = ricci_path(conf, 0.01, 100)
    u_t = np.exp(-entropy.lambda_eigen(path[-1], conf.model).f_min)
    us = flow.solve_conjugate_heat(path, times, u_t, conf.model)
    drift = max(abs(float(np.sum(u * calc.measure(gg, conf.model))) - 1.0) for u, gg in zip(us, path))
    out.append(_le(s, "conjugate heat mass drift", drift, 1e-5))
    ck = ckpt.Checkpoint(g=conf.g0, model=conf.model, f=np.zeros(conf.grid.dims), t=0.5, step=7, dt=1e-3,
                         kind="ricci", scenario_hash=ckpt.scenario_digest("conformal-taut", dims))
    back = ckpt.decode(ckpt.encode(ck))
    same = (back.g.g.tobytes() == ck.g.g.tobytes() and back.f.tobytes() == ck.f.tobytes()
            and back.model.w.tobytes() == ck.model.w.tobytes() and back.t == ck.t and back.step == ck.step)
    out.append(_ge(s, "checkpoint round trip bit-exact", float(same), 1.0))
    return out


def run_suite(name, dims=32, seed=0, scheme="spectral", scenario=None, refine_dims=None):
    if name == "all":
        rows = []
        for sub in SUITES:
            rows += run_suite(sub, dims, seed, scheme, scenario, refine_dims)
        return rows
    if name == "operators":
        return operators_suite(dims, seed, scenario or "flat-taut", scheme, refine_dims)
    if name == "entropy":
        return entropy_suite(dims, seed, scheme, refine_dims)
    if name == "variation":
        return variation_suite(dims, seed, scheme)
    if name == "flow":
        return flow_suite(dims, seed, scheme)
    raise ValueError(f"unknown suite {name!r}; choose from {SUITES + ('all',)}")


def report_dict(checks, suite, dims, seed, scheme):
    return {
        "suite": suite,
        "dims": dims,
        "seed": seed,
        "scheme": scheme,
        "passed": all(c.passed for c in checks),
        "checks": [asdict(c) for c in checks],
    }
