import math

import numpy as np
import pytest

from gkflow.errors import BackgroundExpired, ConeViolation, ConfigError, InsufficientSnapshots
from gkflow.flow import (
    Background,
    ClassData,
    Controller,
    PotentialState,
    assemble_metric,
    cadence,
    evolve,
    normalize_trajectory,
    rhs,
    spectral_radius,
    stencil_times,
    step,
    tau_star,
)
from gkflow.geometry import SplitMetric, constraint_residuals
from gkflow.grid import GridSpec, ScalarField, sup_abs
from gkflow.scenarios import F1_POTENTIAL, build_scenario, field_from_expression

from conftest import field
from oracles import kahler_1d


def state(spec, fn):
    return PotentialState(0.0, field(spec, fn))


def test_assemble_examples(spec64):
    bg = Background.flat(spec64)
    m = assemble_metric(bg, PotentialState.initial(spec64))
    assert np.all(m.gplus.values == 1.0) and np.all(m.gminus.values == 1.0)
    m = assemble_metric(bg, state(spec64, lambda x1, x2, x3, x4: 0.4 * np.cos(x1)))
    assert sup_abs(m.gplus - field(spec64, lambda x1, x2, x3, x4: 1 - 0.1 * np.cos(x1))) < 1e-13
    assert sup_abs(m.gminus - 1.0) < 1e-15
    with pytest.raises(ConeViolation) as exc:
        assemble_metric(bg, state(spec64, lambda x1, x2, x3, x4: 8 * np.cos(x1)))
    assert exc.value.minimum == pytest.approx(-1.0, abs=1e-12)


def test_assembled_metric_is_pluriclosed(f2):
    m = assemble_metric(f2.background, f2.initial)
    assert constraint_residuals(m).pluriclosed_resid < 1e-10


def test_rhs_examples(spec64):
    bg = Background.flat(spec64)
    assert sup_abs(rhs(bg, PotentialState.initial(spec64))) == 0.0
    r = rhs(bg, state(spec64, lambda x1, x2, x3, x4: 0.4 * np.cos(x1)))
    assert r.values[0, 0] == pytest.approx(math.log(0.9), abs=1e-14)
    hp = field(spec64, lambda x1, x2, x3, x4: np.exp(0.1 * np.cos(x1)))
    one = ScalarField.constant(spec64, 1.0)
    bg = Background(SplitMetric(one, one), hp, one)
    want = field(spec64, lambda x1, x2, x3, x4: -0.1 * np.cos(x1))
    assert sup_abs(rhs(bg, PotentialState.initial(spec64)) - want) < 1e-15


def test_background_horizon_and_expiry(spec64, f4):
    assert math.isinf(Background.flat(spec64).validity_horizon)
    bg = f4.background
    assert 10 < bg.validity_horizon < math.inf
    with pytest.raises(BackgroundExpired):
        assemble_metric(bg, PotentialState(bg.validity_horizon + 1.0, f4.initial.f))
    with pytest.raises(BackgroundExpired):
        evolve(bg, f4.initial, bg.validity_horizon * 1.01)


def test_regauge(spec64):
    bg = Background.flat(spec64)
    a = field(spec64, lambda x1, x2, x3, x4: 0.2 * np.cos(x1))
    rg = bg.regauge(a, 2.0)
    assert sup_abs(rg.hplus * rg.hminus - 1.0) < 1e-15
    assert sup_abs(rg.hplus - a.map(lambda v: np.exp(v / 4.0))) < 1e-15
    with pytest.raises(ConfigError):
        bg.regauge(a, 0.0)


def test_step_stationary_and_constant_rhs(spec64):
    bg = Background.flat(spec64)
    s = step(bg, PotentialState.initial(spec64), Controller())
    assert sup_abs(s.f) < 1e-14
    c = math.log(2.0)
    bg = Background.flat(spec64, hplus=1.0, hminus=2.0)
    s = step(bg, PotentialState.initial(spec64), Controller(), dt=0.01)
    assert sup_abs(s.f - c * 0.01) < 1e-14


def test_controller_and_cfl(spec64):
    with pytest.raises(ConfigError):
        Controller(sigma=-1)
    with pytest.raises(ConfigError):
        Controller(dt=0.0)
    m = assemble_metric(Background.flat(spec64), PotentialState.initial(spec64))
    # kz = kw = 32^2 / 4 on the unit metric
    assert spectral_radius(m) == pytest.approx(512.0)


def test_rk4_self_convergence_order():
    spec = GridSpec.reduced(64, 8)
    bg = Background.flat(spec)
    s0 = PotentialState(0.0, field_from_expression(spec, F1_POTENTIAL))
    t_end = 0.2

    def final(dt):
        return evolve(bg, s0, t_end, Controller(dt=dt)).final.f

    # finer steps hit roundoff (~1e-14) on this data
    dts = (4e-3, 2e-3, 1e-3)
    ref = final(dts[-1] / 16)
    errs = [sup_abs(final(dt) - ref) for dt in dts]
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert all(3.7 <= p <= 4.3 for p in orders), orders


def test_cone_violation_reports_stage_and_keeps_partial_trajectory(spec64):
    bg = Background.flat(spec64)
    s0 = state(spec64, lambda x1, x2, x3, x4: 3.9 * np.cos(x1))
    with pytest.raises(ConeViolation) as exc:
        evolve(bg, s0, 1.0, Controller(dt=0.05))
    e = exc.value
    assert e.stage in (1, 2, 3, 4) and e.time is not None
    assert len(e.trajectory.states) >= 1 and e.trajectory.error is e


def test_evolve_lands_on_record_times(f2):
    rec = [0.01, 0.0137, 0.02]
    traj = evolve(f2.background, f2.initial, 0.03, record_times=rec)
    assert list(traj.times) == [0.0, 0.01, 0.0137, 0.02, 0.03]
    assert traj.state_at(0.0137).t == 0.0137
    with pytest.raises(InsufficientSnapshots):
        traj.state_at(0.015)
    again = evolve(f2.background, f2.initial, 0.03, record_times=rec)
    assert np.array_equal(again.final.f.values, traj.final.f.values)


def test_time_grids():
    assert stencil_times([0.5, 1.0], 0.1) == [0.4, 0.5, 0.6, 0.9, 1.0, 1.1]
    assert stencil_times([0.0], 0.1) == [0.0, 0.1]
    assert cadence(1.0, 0.25) == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert cadence(1.0, 0.0) == []


def test_kahler_reduction_against_1d_solver():
    spec = GridSpec.reduced(64, 8)
    sc = build_scenario("kahler-reduction", spec)
    traj = evolve(sc.background, sc.initial, 1.0, record_times=[0.25, 0.5, 0.75])
    sol = kahler_1d(sc.initial.f.values[:, 0], 1.0)
    for st in traj.states:
        assert np.max(np.abs(st.f.values - sol.sol(st.t)[:, None])) < 1e-8
        m = assemble_metric(sc.background, st)
        assert sup_abs(m.gminus - 1.0) < 1e-12
    spread = [np.ptp(assemble_metric(sc.background, st).gplus.values) for st in traj.states]
    assert all(b < a for a, b in zip(spread, spread[1:]))


def test_tau_star_table():
    assert tau_star(ClassData(1, 2, 0.2, -0.1)) == 5.0
    assert tau_star(ClassData(1, 1, 0.5, 0.25)) == 2.0
    assert math.isinf(tau_star(ClassData(1, 1, 0.0, 0.0)))
    with pytest.raises(ConfigError):
        ClassData(0.0, 1.0)


def test_class_data_of_torus_backgrounds(spec64, f4):
    c = ClassData.from_background(Background.flat(spec64))
    assert c.a_plus == pytest.approx(4 * math.pi**2)
    assert c.pi_plus == 0.0 and c.pi_minus == 0.0
    assert math.isinf(tau_star(ClassData.from_background(f4.background)))


def test_normalized_stationary_and_origin(spec32):
    bg = Background.flat(spec32)
    traj = evolve(bg, PotentialState.initial(spec32), 1.0, record_times=[0.25, 0.5])
    samples = normalize_trajectory(traj)
    assert samples[0].s == 0.0
    m0 = assemble_metric(bg, traj.states[0])
    assert np.array_equal(samples[0].metric.gplus.values, m0.gplus.values)
    for x in samples:
        assert sup_abs(x.metric.gplus - math.exp(-x.s)) < 1e-15
        assert sup_abs(x.metric.gminus - math.exp(-x.s)) < 1e-15
    with pytest.raises(InsufficientSnapshots):
        normalize_trajectory(traj, s_max=2.0)
