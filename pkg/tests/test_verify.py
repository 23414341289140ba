import csv
import math

import numpy as np
import pytest

from gkflow.errors import ConfigError, InsufficientSnapshots
from gkflow.flow import Background, Controller, PotentialState, evolve, stencil_times
from gkflow.grid import ScalarField, Spectrum, sup_abs
from gkflow.verify import (
    CHECK_GROUPS,
    IDENTITIES,
    MonitorSeries,
    check_fdot,
    check_gradient,
    check_halfdet,
    check_norm_evolution,
    check_torsion_potential,
    check_trace_identities,
    coupled_heat,
    identity_series,
    monitor_estimates,
    observed_orders,
    psi_sup_terms,
    refinement_study,
)

from conftest import field

ALL = [n for g in CHECK_GROUPS.values() for n in g]


@pytest.fixture(scope="module")
def stationary(spec32):
    bg = Background.flat(spec32)
    return evolve(bg, PotentialState.initial(spec32), 0.2, record_times=stencil_times([0.1], 0.01))


def test_flat_stationary_identities_vanish(stationary):
    series = identity_series(stationary, ALL, [0.1])
    for name, s in series.items():
        assert s.worst == 0.0, name
    assert check_norm_evolution(stationary, [0.1]).max_increase == 0.0


def test_psi_vanishes_on_flat_background(f2):
    terms = psi_sup_terms(f2.background, f2.initial)
    assert len(terms) == 10 and max(terms.values()) < 1e-12


def test_torsion_potential_at_origin(f2):
    beta = Spectrum(f2.initial.f).derivative("dzdw")
    assert beta.values[0, 0] == pytest.approx(0.05, abs=1e-15)


def test_dt_halving_shrinks_residuals_fourfold(f2):
    dt0 = 4e-3
    out = []
    for dt in (dt0, dt0 / 2):
        traj = evolve(f2.background, f2.initial, 0.3, Controller(dt=dt), record_times=stencil_times([0.25], dt))
        out.append(
            [s.worst for s in check_halfdet(traj, [0.25])]
            + [check_fdot(traj, [0.25]).worst, check_torsion_potential(traj, [0.25]).worst]
        )
    for a, b in zip(*out):
        assert 4 * 0.7 <= a / b <= 4 * 1.3


def test_flat_h_halfdet_has_no_rho_term(f2):
    # with constant h the right-hand side is Delta log g + |T|^2 / 2
    from gkflow.verify import Frame

    fr = Frame(f2.background, f2.initial)
    q, r = IDENTITIES["halfdet_plus"]
    direct = fr.lap(q(fr)) + 0.5 * fr.tor.norm_sq
    assert sup_abs(r(fr) - direct) == 0.0


def test_fdot_converges_with_conformal_background(f4):
    study = refinement_study(f4.background, f4.initial, [0.1], ["fdot", "halfdet_plus", "torsion_potential"], 4e-3, 3)
    for name in study.orders:
        assert study.min_order(name) > 1.8, (name, study.orders[name])


def test_trace_identities_need_flat_h(f4, f2):
    traj = evolve(f4.background, f4.initial, 0.03, Controller(dt=0.01), record_times=[0.01, 0.02])
    with pytest.raises(ConfigError):
        check_trace_identities(traj, [0.01])
    traj = evolve(f2.background, f2.initial, 0.03, Controller(dt=0.01), record_times=[0.01, 0.02])
    rep = check_trace_identities(traj, [0.01])
    assert len(rep.series) == 5 and rep.cross_formula < 1e-9


def test_differencing_needs_equally_spaced_states(f2):
    traj = evolve(f2.background, f2.initial, 0.03, record_times=[0.011])
    with pytest.raises(InsufficientSnapshots):
        check_fdot(traj)


def test_observed_orders():
    assert observed_orders([1.0, 0.25, 0.0625]) == [2.0, 2.0]


def test_monitors_stationary_and_linear_growth(spec32):
    bg = Background.flat(spec32)
    _, mon = monitor_estimates(bg, PotentialState.initial(spec32), 0.5)
    c = mon.constants()
    assert c["C_f"] == 0.0 and c["C_f_rate"] == 0.0 and c["C_fdot"] == 0.0 and math.isfinite(c["C_phi"])
    ratio = 0.5
    bg = Background.flat(spec32, hplus=ratio, hminus=1.0)
    traj, mon = monitor_estimates(bg, PotentialState.initial(spec32), 2.0)
    assert sup_abs(traj.final.f - 2.0 * math.log(1 / ratio)) < 1e-10
    c = mon.constants()
    assert abs(c["C_f_rate"] - abs(math.log(ratio))) < 1e-10
    # the (1 + t) bound is only approached as t grows
    assert c["C_f"] == pytest.approx(abs(math.log(ratio)) * 2.0 / 3.0, abs=1e-10)


def test_monitor_csv(tmp_path, f2):
    _, mon = monitor_estimates(f2.background, f2.initial, 0.01)
    mon.write_csv(tmp_path / "m.csv")
    rows = list(csv.reader(open(tmp_path / "m.csv")))
    assert rows[0][0] == "time" and "phi_mub" in rows[0]
    assert len(rows) == len(mon.times) + 1


def test_heat_with_constant_data_stays_constant(f2):
    traj = evolve(f2.background, f2.initial, 0.05)
    u0 = ScalarField.constant(f2.initial.f.spec, 2.0)
    heat = coupled_heat(traj, u0)
    assert sup_abs(heat.samples[-1].u - 2.0) < 1e-14
    assert max(heat.sup_grad_sq) < 1e-28


def test_heat_on_flat_metric_is_exact(spec32):
    bg = Background.flat(spec32)
    traj = evolve(bg, PotentialState.initial(spec32), 1.0)
    u0 = field(spec32, lambda x1, x2, x3, x4: np.cos(x1))
    heat = coupled_heat(traj, u0)
    want = u0 * math.exp(-0.25)
    assert sup_abs(heat.samples[-1].u - want) < 1e-12
    assert heat.sup_grad_sq[-1] == pytest.approx(0.25 * math.exp(-0.5), rel=1e-12)


def test_gradient_identity_on_f2(f2):
    delta = 1e-3
    traj = evolve(f2.background, f2.initial, 0.3, record_times=stencil_times([0.25], delta))
    u0 = field(f2.initial.f.spec, lambda x1, x2, x3, x4: np.sin(x1) + np.sin(x3))
    heat = coupled_heat(traj, u0, stencil_times([0.25], delta))
    rep = check_gradient(heat, [0.25])
    assert rep.identity.worst < 1e-6
    assert max(rep.inequality_max) <= rep.identity.worst
    assert rep.sup_grad_increase <= 1e-8


def test_monitor_series_constants():
    mon = MonitorSeries()
    base = dict(sup_df=0.0, sup_trace_hg=2, sup_trace_gh=2, sup_torsion_potential_sq=0, sup_T_sq=0, phi_mub=3)
    mon.append(0.0, dict(base, sup_f=0.1, inf_f=-0.2, sup_fdot=0.3, inf_fdot=-0.1))
    mon.append(1.0, dict(base, sup_f=0.5, inf_f=-0.2, sup_fdot=0.1, inf_fdot=-0.1))
    assert mon.constants() == {"C_f": 0.25, "C_f_rate": 0.0, "C_fdot": 0.3, "C_phi": 3.0}
