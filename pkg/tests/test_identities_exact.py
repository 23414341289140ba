"""Evolution identities checked at a single state against exact time derivatives.

Along the flow  d/dt g+ = -p+(h) + fdot_{z zbar}  and  d/dt g- = -p-(h) - fdot_{w wbar},
so every left-hand side can be written down without time differencing.
"""

import numpy as np
import pytest

from gkflow.flow import Background
from gkflow.geometry import gradient01_sq, p_split
from gkflow.grid import ScalarField, Spectrum, log, sup_abs
from gkflow.verify import IDENTITIES, Frame, gradient_terms, n2trace_rhs, psi, psi_terms
from gkflow.geometry import chern_laplacian


def rates(fr):
    sd = Spectrum(fr.fdot)
    p = fr.bg.p_of_h
    return -p.p_plus + sd.derivative("dzdzbar"), -p.p_minus - sd.derivative("dwdwbar")


def residual(name, fr, exact):
    return sup_abs(exact - IDENTITIES[name][1](fr)) / max(sup_abs(exact), 1e-300)


@pytest.fixture(scope="module")
def frame(full4d_data):
    return Frame(*full4d_data)


@pytest.fixture(scope="module")
def flat_h_frame(full4d_data):
    bg, s = full4d_data
    return Frame(Background(bg.g0, bg.hplus * 0 + 1.3, bg.hminus * 0 + 0.8), s)


def test_metric_velocity_is_minus_p(frame):
    gpd, gmd = rates(frame)
    p = p_split(frame.m)
    assert sup_abs(gpd + p.p_plus) < 1e-12
    assert sup_abs(gmd + p.p_minus) < 1e-12


def test_halfdet(frame):
    gpd, gmd = rates(frame)
    assert residual("halfdet_plus", frame, gpd / frame.m.gplus) < 1e-10
    assert residual("halfdet_minus", frame, gmd / frame.m.gminus) < 1e-10


def test_fdot(frame):
    gpd, gmd = rates(frame)
    assert residual("fdot", frame, gpd / frame.m.gplus - gmd / frame.m.gminus) < 1e-10


def test_torsion_potential_and_psi(frame):
    exact = Spectrum(frame.fdot).derivative("dzdw")
    assert residual("torsion_potential", frame, exact) < 1e-10
    terms = psi_terms(frame)
    assert all(sup_abs(v) > 0 for v in terms.values())
    # the cross terms cancel the background quadratic terms
    assert sup_abs(terms["cross_minus"] + terms["bg_quad_minus"]) < 1e-15
    assert sup_abs(terms["cross_plus"] + terms["bg_quad_plus"]) < 1e-15


def test_psi_compact_form(frame):
    # Psi = d_z d_w log(h-/h+) + (g~+)_{zw}/g+ - (g~-)_{zw}/g- - Gamma_z t~+/g+ + Gamma_w t~-/g-
    m, jet, bg = frame.m, frame.jet, frame.background
    gp, gm = m.gplus, m.gminus
    sbp, sbm = Spectrum(bg.gplus), Spectrum(bg.gminus)
    gam_z = jet.d(+1, "dz") / gp + jet.d(-1, "dz") / gm
    gam_w = jet.d(+1, "dw") / gp + jet.d(-1, "dw") / gm
    lh = Spectrum(log(frame.bg.hminus) - log(frame.bg.hplus)).derivative("dzdw")
    compact = (
        lh
        + sbp.derivative("dzdw") / gp
        - sbm.derivative("dzdw") / gm
        - gam_z * sbp.derivative("dw") / gp
        + gam_w * sbm.derivative("dz") / gm
    )
    assert sup_abs(psi(frame) - compact) < 1e-13


def test_norm_evolution(frame):
    gpd, gmd = rates(frame)
    m, beta = frame.m, frame.beta
    bdot = Spectrum(frame.fdot).derivative("dzdw")
    vol = m.gplus * m.gminus
    x = beta.abs2() / vol
    exact = 2.0 * (beta.conj() * bdot).real / vol - x * (gpd / m.gplus + gmd / m.gminus)
    assert residual("torsion_potential_norm", frame, exact) < 1e-9


@pytest.mark.parametrize("sign", [+1, -1])
def test_trace_identities(flat_h_frame, sign):
    fr = flat_h_frame
    gd = rates(fr)[0 if sign > 0 else 1]
    g, h = fr.coeff(sign), fr.h(sign)
    name = "plus" if sign > 0 else "minus"
    assert residual(f"inversemetric_{name}", fr, -h * gd / (g * g)) < 1e-10
    assert residual(f"partialmetric_{name}", fr, gd / h) < 1e-10
    if sign > 0:
        assert residual("n2trace_plus", fr, gd / h) < 1e-10
        assert sup_abs(n2trace_rhs(fr) - IDENTITIES["partialmetric_plus"][1](fr)) < 1e-12


def test_trace_identities_refuse_nonflat_h(frame):
    from gkflow.errors import ConfigError

    with pytest.raises(ConfigError):
        IDENTITIES["partialmetric_plus"][1](frame)


def test_gradient_identity_and_inequality(frame, full4d_data):
    bg, _ = full4d_data
    m = frame.m
    gpd, gmd = rates(frame)
    c = m.spec.coords()
    u = ScalarField(
        m.spec,
        np.broadcast_to(
            0.3 * np.cos(c["x1"] - c["x4"] + 0.4) + 0.2 * np.sin(c["x2"] + c["x3"]) + 0.1 * np.cos(c["x1"] + c["x3"]),
            m.spec.shape,
        ),
    )
    ud = chern_laplacian(m, u)
    su, sud = Spectrum(u), Spectrum(ud)
    uzb, uwb = su.derivative("dzbar"), su.derivative("dwbar")
    exact = (
        2 * (uzb.conj() * sud.derivative("dzbar")).real / m.gplus
        - uzb.abs2() * gpd / m.gplus**2
        + 2 * (uwb.conj() * sud.derivative("dwbar")).real / m.gminus
        - uwb.abs2() * gmd / m.gminus**2
    )
    p = gradient_terms(m, u)
    lap = chern_laplacian(m, p["norm"])
    rhs = lap - p["grad"] - p["gradbar"] - p["q_term"] + p["cross"]
    assert sup_abs(exact - rhs) < 1e-10 * sup_abs(exact)
    assert float(np.max((exact - lap + p["gradbar"]).values)) <= 1e-12
    assert sup_abs(p["norm"] - gradient01_sq(m, u)) == 0.0
