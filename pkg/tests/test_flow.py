import math

import numpy as np
import pytest
import scipy.linalg

import oracles
from transflow import flow
from transflow.calculus import FoliationModel, measure
from transflow.entropy import f_T
from transflow.errors import ModeUnsupported, NonPositive
from transflow.geometry import MetricField, volume
from transflow.grid import ChartGrid
from transflow.scenarios import build

TWO_PI = 2 * np.pi


def test_cfl_formula():
    g = MetricField.identity(ChartGrid.square(16))
    assert flow.cfl_dt(g, 0.1) == pytest.approx(0.1 / 16**2 / 2)
    assert flow.cfl_dt(g.scaled(4.0), 0.1) == pytest.approx(4 * 0.1 / 16**2 / 2)


def test_initial_state():
    sc = build("conformal-taut", 16)
    st = flow.initial_state("gauged", sc.g0, sc.model)
    assert st.t == 0.0 and st.step == 0
    assert st.dt == pytest.approx(flow.cfl_dt(sc.g0, flow.DEFAULT_CFL["gauged"]))
    assert np.sum(st.u * measure(sc.g0, sc.model)) == pytest.approx(1.0, rel=1e-14)
    with pytest.raises(ValueError):
        flow.initial_state("mean-curvature", sc.g0, sc.model)


@pytest.mark.parametrize("kind", flow.FLOW_KINDS)
def test_flat_torus_is_stationary(kind):
    sc = build("flat-taut", 16)
    st = flow.initial_state(kind, sc.g0, sc.model)
    for _ in range(5):
        st = flow.step(st)
    assert np.max(np.abs(st.g.g - sc.g0.g)) < 1e-13
    assert np.max(np.abs(st.f)) < 1e-13
    assert st.t == pytest.approx(5 * st.dt)


def _oracle_conformal_ricci(u, dt, n_steps):
    """RK4 for ``u_t = e^{-2u} Delta_0 u`` on the unit torus with plain numpy
    FFTs."""
    n = u.shape[0]
    k = TWO_PI * np.fft.fftfreq(n, 1.0 / n)
    k2 = k[:, None] ** 2 + k[None, :] ** 2

    def rate(v):
        return np.exp(-2 * v) * np.real(np.fft.ifft2(-k2 * np.fft.fft2(v)))

    for _ in range(n_steps):
        a = rate(u)
        b = rate(u + 0.5 * dt * a)
        c = rate(u + 0.5 * dt * b)
        d = rate(u + dt * c)
        u = u + dt / 6 * (a + 2 * b + 2 * c + d)
    return u


def test_ricci_flow_of_conformal_metric_matches_scalar_oracle():
    sc = build("conformal-taut", 32)
    x, y = sc.grid.coords()
    st = flow.initial_state("ricci", sc.g0, sc.model)
    n = 50
    for _ in range(n):
        st = flow.step(st)
    u = _oracle_conformal_ricci(oracles.conformal_u(x, y), st.dt, n)
    expected = np.exp(2 * u) * np.eye(2)[:, :, None, None]
    # RK4 on g and on u differ at O(dt^4); the spatial parts are identical
    assert np.max(np.abs(st.g.g - expected)) < 1e-9


def test_rk4_convergence_order():
    sc = build("conformal-taut", 32)
    st = flow.initial_state("ricci", sc.g0, sc.model)
    horizon = 20 * st.dt
    finals = {}
    for n in (5, 10, 40):
        s = st
        for _ in range(n):
            s = flow.step(s, horizon / n)
        finals[n] = np.asarray(s.g.g)
    e5 = np.max(np.abs(finals[5] - finals[40]))
    e10 = np.max(np.abs(finals[10] - finals[40]))
    assert 12 <= e5 / e10 <= 20


def test_surface_volume_is_conserved_by_ricci_flow():
    # total curvature of a torus vanishes
    sc = build("anisotropic", 32)
    st = flow.initial_state("ricci", sc.g0, sc.model)
    v0 = volume(st.g)
    for _ in range(100):
        st = flow.step(st)
    assert volume(st.g) == pytest.approx(v0, rel=1e-11)


def test_gradient_flow_preserves_weighted_density():
    # the coupled system keeps e^{-f} dmu fixed pointwise
    sc = build("weighted-exact", 32)
    x, y = sc.grid.coords()
    st = flow.initial_state("gradient", sc.g0, sc.model, f=0.2 * np.sin(TWO_PI * y))
    density0 = st.u * measure(st.g, sc.model)
    for _ in range(40):
        st = flow.step(st)
    assert np.max(np.abs(st.u * measure(st.g, sc.model) - density0)) < 1e-12
    assert np.max(np.abs(st.g.g - sc.g0.g)) > 1e-6


def test_entropy_increases_along_gradient_flow():
    sc = build("conformal-taut", 32)
    x, y = sc.grid.coords()
    st = flow.initial_state("gradient", sc.g0, sc.model, f=0.2 * np.cos(TWO_PI * (x + y)))
    values = [f_T(st.g, st.f, sc.model)]
    for _ in range(60):
        st = flow.step(st)
        values.append(f_T(st.g, st.f, sc.model))
    d = np.diff(values)
    assert d.min() >= -1e-7 * (1 + abs(values[-1]))
    assert values[-1] > values[0]


def test_gauged_flow_keeps_metric_on_ricci_path():
    sc = build("conformal-taut", 16)
    gauged = flow.initial_state("gauged", sc.g0, sc.model)
    ricci = flow.initial_state("ricci", sc.g0, sc.model, dt=gauged.dt)
    for _ in range(10):
        gauged, ricci = flow.step(gauged), flow.step(ricci)
    assert np.array_equal(gauged.g.g, ricci.g.g)


def test_gauged_flow_solves_conjugate_heat_equation():
    from transflow.verify import gauged_residual
    coarse = gauged_residual(16, 2e-5)
    fine = gauged_residual(16, 1e-5)
    assert coarse / fine > 3.0


def test_twisted_ricci_step_allowed_but_conjugate_heat_refused():
    sc = build("twisted-nontaut", 16)
    st = flow.step(flow.initial_state("ricci", sc.g0, sc.model))
    assert st.step == 1
    with pytest.raises(ModeUnsupported):
        flow.solve_conjugate_heat([sc.g0, sc.g0], [0.0, 0.1], np.ones(sc.grid.dims), sc.model)


def test_conjugate_heat_rejects_bad_input():
    sc = build("flat-taut", 16)
    with pytest.raises(NonPositive):
        flow.solve_conjugate_heat([sc.g0] * 2, [0.0, 0.1], -np.ones(sc.grid.dims), sc.model)
    with pytest.raises(ValueError):
        flow.solve_conjugate_heat([sc.g0] * 2, [0.0, 0.1, 0.2], np.ones(sc.grid.dims), sc.model)


def test_conjugate_heat_keeps_constants_on_flat_torus():
    sc = build("flat-taut", 16)
    out = flow.solve_conjugate_heat([sc.g0] * 11, np.linspace(0, 0.1, 11), np.full(sc.grid.dims, 2.0), sc.model)
    assert np.max(np.abs(out[0] - 2.0)) < 1e-13


def test_conjugate_heat_against_matrix_exponential():
    sc = build("conformal-taut", 16)
    g, model = sc.g0, sc.model
    lap, _ = oracles.dense_schrodinger(sc.grid.dims, sc.grid.periods, g.inv, model.w,
                                       g.sqrt_det, np.zeros(sc.grid.dims))
    generator = lap / 4 + np.diag(g.curvature.scal.ravel())
    x, y = sc.grid.coords()
    u_T = 1 + 0.3 * np.sin(TWO_PI * x) * np.cos(TWO_PI * y)
    horizon = 0.01
    expected = scipy.linalg.expm(-horizon * generator) @ u_T.ravel()
    errors = []
    for n in (40, 80, 160):
        out = flow.solve_conjugate_heat([g] * (n + 1), np.linspace(0, horizon, n + 1), u_T, model)
        errors.append(np.max(np.abs(out[0].ravel() - expected)))
    assert 3.5 < errors[0] / errors[1] < 4.5
    assert errors[-1] < 1e-6


def test_conjugate_heat_mass_along_ricci_path():
    sc = build("conformal-taut", 16)
    st = flow.initial_state("ricci", sc.g0, sc.model)
    path, times = [st.g], [0.0]
    for _ in range(100):
        st = flow.step(st)
        path.append(st.g)
        times.append(st.t)
    u_T = np.ones(sc.grid.dims) / volume(path[-1])
    out = flow.solve_conjugate_heat(path, times, u_T, sc.model)
    masses = [np.sum(u * measure(gk, sc.model)) for u, gk in zip(out, path)]
    assert max(abs(mm - 1) for mm in masses) < 1e-5


def test_run_emits_rows_and_checkpoints():
    sc = build("conformal-taut", 16)
    st = flow.initial_state("ricci", sc.g0, sc.model)
    seen, ckpts = [], []
    res = flow.run(st, 25, lambda_every=10, checkpoint_every=10,
                   on_row=seen.append, on_checkpoint=lambda s: ckpts.append(s.step))
    assert res.status == "ok"
    assert [r.t for r in res.rows] == pytest.approx([0, 10 * st.dt, 20 * st.dt, 25 * st.dt])
    assert seen == res.rows
    assert ckpts == [10, 20]
    assert res.state.step == 25
    assert all(not math.isnan(r.lambda_) for r in res.rows)


def test_run_reports_blowup():
    sc = build("conformal-taut", 16)
    st = flow.initial_state("ricci", sc.g0, sc.model, dt=50 * flow.cfl_dt(sc.g0))
    res = flow.run(st, 200, lambda_every=1000)
    assert res.status == "blowup"
    assert res.diagnostic["error"] == "SingularMetric"
    assert res.diagnostic["step"] < 200


def test_n_steps_for():
    assert flow.n_steps_for(0.1, 0.01) == 10
    assert flow.n_steps_for(0.1, 0.03) == 4
    assert flow.n_steps_for(1e-9, 1.0) == 1


def _rows(lams, bars=None):
    bars = lams if bars is None else bars
    return [flow.DiagnosticRow(float(i), lam, bar, 0.0, 1.0, 1.0, 1.0)
            for i, (lam, bar) in enumerate(zip(lams, bars))]


def test_monitor_accepts_monotone_series():
    rep = flow.monitor(_rows([-2.0, -1.5, -1.5, -0.2]))
    assert rep.ok and rep.min_delta == 0.0


def test_monitor_flags_decrease():
    rep = flow.monitor(_rows([-2.0, -1.0, -1.1, -0.5]))
    assert rep.violations == (1,)
    assert not rep.ok


def test_monitor_tolerates_roundoff():
    rep = flow.monitor(_rows([1.0, 1.0 - 5e-8, 1.0 + 1e-9]))
    assert rep.ok


def test_monitor_bar_predicate_starts_at_first_nonpositive():
    lams = [0.0, 0.1, 0.2, 0.3, 0.4]
    bars = [0.5, 0.2, -0.1, -0.3, -0.2]
    rep = flow.monitor(_rows(lams, bars))
    assert rep.bar_predicate_active
    assert rep.bar_violations == (2,)
    # a decrease before the predicate activates is not counted
    rep = flow.monitor(_rows(lams, [0.5, 0.2, 0.1, -0.1, 0.0]))
    assert rep.bar_violations == ()
    assert not flow.monitor(_rows(lams, bars), taut=False).bar_predicate_active


def test_monitor_skips_rows_without_lambda():
    rows = _rows([1.0, float("nan"), 1.0, 2.0])
    assert flow.monitor(rows).deltas == (0.0, 1.0)
    with pytest.raises(ValueError):
        flow.monitor(_rows([1.0, 2.0]))


def test_surface_ricci_flow_stays_conformal():
    # aliasing used to pump roundoff into the trace-free part at this size
    sc = build("conformal-taut", 64)
    st = flow.initial_state("ricci", sc.g0, sc.model)
    for _ in range(600):
        st = flow.step(st)
    g = st.g.g
    assert max(np.max(np.abs(g[0, 1])), np.max(np.abs(g[0, 0] - g[1, 1]))) < 1e-12
