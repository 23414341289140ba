"""Pointwise geometry of a rank-one split Hermitian metric on the 2+2 torus.

A split metric is ``omega = i gplus dz^dzbar + i gminus dw^dwbar``; the
mixed coefficient vanishes identically and each leaf is complex
one-dimensional, so det g+ = gplus and det g- = gminus.

Index convention for tensor arrays: position 0 is the T+ direction (z),
position 1 the T- direction (w).  Two-form coefficients are always reported
as the coefficient of ``i dz^dzbar`` (resp. ``i dw^dwbar``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConeViolation
from .grid import EPS_POS, ScalarField, Spectrum, check_finite, guard_positive, log, reduce, sup_abs

FIRST = ("dz", "dzbar", "dw", "dwbar")
SECOND = ("dzdzbar", "dzdwbar", "dzbardw", "dwdwbar", "dzdw")


@dataclass(frozen=True)
class SplitMetric:
    gplus: ScalarField
    gminus: ScalarField

    @property
    def spec(self):
        return self.gplus.spec

    def check(self, eps=EPS_POS):
        guard_positive(self.gplus, eps, "gplus")
        guard_positive(self.gminus, eps, "gminus")
        return self

    def coefficient(self, sign):
        return self.gplus if sign > 0 else self.gminus


@dataclass(frozen=True)
class TorsionData:
    t_plus: ScalarField  # T_{w z zbar} = d_w gplus
    t_minus: ScalarField  # T_{z w wbar} = d_z gminus
    norm_sq: ScalarField
    q_plus: ScalarField
    q_minus: ScalarField


@dataclass(frozen=True)
class CurvatureForm:
    p_plus: ScalarField
    p_minus: ScalarField
    p_mixed: Optional[ScalarField] = None  # dz^dwbar coefficient, when computed

    def __add__(self, other):
        return CurvatureForm(self.p_plus + other.p_plus, self.p_minus + other.p_minus)

    def __sub__(self, other):
        return CurvatureForm(self.p_plus - other.p_plus, self.p_minus - other.p_minus)

    def scale(self, c):
        return CurvatureForm(self.p_plus * c, self.p_minus * c)


@dataclass(frozen=True)
class ConstraintReport:
    pluriclosed_resid: float
    min_gplus: float
    min_gminus: float


class MetricJet:
    """First and second Wirtinger derivatives of gplus and gminus."""

    def __init__(self, m: SplitMetric):
        self.metric = m
        sp, sm = Spectrum(m.gplus), Spectrum(m.gminus)
        self.plus = {op: sp.derivative(op) for op in FIRST + SECOND}
        self.minus = {op: sm.derivative(op) for op in FIRST + SECOND}

    def d(self, sign, op):
        return (self.plus if sign > 0 else self.minus)[op]


def _jet(m, jet):
    return jet if jet is not None else MetricJet(m)


def constraint_residuals(m: SplitMetric, jet: MetricJet = None) -> ConstraintReport:
    check_finite(m.gplus, "gplus")
    check_finite(m.gminus, "gminus")
    jet = _jet(m, jet)
    resid = jet.d(+1, "dwdwbar") + jet.d(-1, "dzdzbar")
    return ConstraintReport(sup_abs(resid), reduce(m.gplus, "inf"), reduce(m.gminus, "inf"))


# --- torsion and Q -----------------------------------------------------------


def _stack(fields):
    return np.stack([np.asarray(f.values, dtype=np.complex128) for f in fields])


def torsion_tensor(m: SplitMetric, jet: MetricJet = None):
    """Array T[i, j, k] = T_{i j kbar}, shape (2, 2, 2, *grid)."""
    jet = _jet(m, jet)
    shape = m.spec.shape
    T = np.zeros((2, 2, 2) + shape, dtype=np.complex128)
    t_plus = jet.d(+1, "dw").values
    t_minus = jet.d(-1, "dz").values
    T[1, 0, 0] = t_plus
    T[0, 1, 0] = -t_plus
    T[0, 1, 1] = t_minus
    T[1, 0, 1] = -t_minus
    return T


def _inverse_diag(m):
    return np.stack([1.0 / m.gplus.values, 1.0 / m.gminus.values])


def _as_field(m, arr):
    # diagonal entries of a Hermitian form are real
    return ScalarField(m.spec, np.asarray(arr).real)


def torsion(m: SplitMetric, jet: MetricJet = None, eps=EPS_POS) -> TorsionData:
    m.check(eps)
    jet = _jet(m, jet)
    T = torsion_tensor(m, jet)
    ginv = _inverse_diag(m)
    # |T|^2 = g^{i ibar} g^{j jbar} g^{k kbar} T_{ijkbar} conj(T_{ijkbar})
    norm = np.einsum("i...,j...,k...,ijk...->...", ginv, ginv, ginv, (T * T.conj()).real)
    # Q_{i jbar} = g^{lbar k} g^{nbar m} T_{i k nbar} conj(T_{j l mbar})
    Q = np.einsum("k...,n...,ikn...,jkn...->ij...", ginv, ginv, T, T.conj())
    t_plus = jet.d(+1, "dw")
    t_minus = jet.d(-1, "dz")
    return TorsionData(
        t_plus=t_plus,
        t_minus=t_minus,
        norm_sq=ScalarField(m.spec, norm),
        q_plus=ScalarField(m.spec, Q[0, 0].real),
        q_minus=ScalarField(m.spec, Q[1, 1].real),
    )


# --- first Chern forms and P -------------------------------------------------


def rho_transgression(det_field: ScalarField, eps=EPS_POS) -> CurvatureForm:
    """Projections of -i ddbar log det onto dz^dzbar and dw^dwbar."""
    sp = Spectrum(log(det_field, eps))
    return CurvatureForm(-sp.derivative("dzdzbar"), -sp.derivative("dwdwbar"))


def rho_transgression_pointwise(log_det: Callable, z: complex, h: float = 1e-3) -> float:
    """-d/dz d/dzbar of ``log_det(z)`` at a point off the periodic grid.

    Used for closed-form model metrics (e.g. on the upper half plane); the
    Laplacian is a fourth-order central difference in (Re z, Im z).
    """
    def lap_axis(dz):
        return (
            -log_det(z + 2 * dz) + 16 * log_det(z + dz) - 30 * log_det(z)
            + 16 * log_det(z - dz) - log_det(z - 2 * dz)
        ) / (12 * h * h)

    return -0.25 * float(np.real(lap_axis(h) + lap_axis(1j * h)))


def p_split(m: SplitMetric, eps=EPS_POS) -> CurvatureForm:
    """P = rho_+^+ - rho_-^+ - rho_+^- + rho_-^- for a rank-one split metric."""
    m.check(eps)
    rho_plus = rho_transgression(m.gplus, eps)
    rho_minus = rho_transgression(m.gminus, eps)
    return CurvatureForm(
        p_plus=rho_plus.p_plus - rho_minus.p_plus,
        p_minus=-rho_plus.p_minus + rho_minus.p_minus,
    )


def _metric_arrays(m: SplitMetric, jet: MetricJet):
    """g_{i jbar}, d_p g_{i jbar}, d_qbar g_{i jbar}, d_p d_qbar g_{i jbar} as arrays."""
    shape = m.spec.shape
    G = np.zeros((2, 2) + shape, dtype=np.complex128)
    G[0, 0], G[1, 1] = m.gplus.values, m.gminus.values
    dG = np.zeros((2, 2, 2) + shape, dtype=np.complex128)
    dGb = np.zeros_like(dG)
    ddG = np.zeros((2, 2, 2, 2) + shape, dtype=np.complex128)
    hol, antihol = ("dz", "dw"), ("dzbar", "dwbar")
    mixed = {(0, 0): "dzdzbar", (0, 1): "dzdwbar", (1, 0): "dzbardw", (1, 1): "dwdwbar"}
    for a, sign in ((0, +1), (1, -1)):
        for p in range(2):
            dG[a, a, p] = jet.d(sign, hol[p]).values
            dGb[a, a, p] = jet.d(sign, antihol[p]).values
            for q in range(2):
                ddG[a, a, p, q] = jet.d(sign, mixed[(p, q)]).values
    return G, dG, dGb, ddG


def p_direct(m: SplitMetric, jet: MetricJet = None, eps=EPS_POS) -> CurvatureForm:
    """Evaluate the general local-coordinate formula for P(omega).

        P_{i jbar} = -i [ g^{qbar p} g_{i jbar, p qbar}
                          + g^{qbar r} g^{sbar p} ( g_{r sbar, jbar} g_{p qbar, i}
                                                    - g_{r sbar, jbar} g_{i qbar, p}
                                                    - g_{r sbar, i} g_{p jbar, qbar} ) ]

    with all indices summed over both blocks and the inverse metric taken as
    a full 2x2 matrix inverse.  This deliberately does not use the rank-one
    simplifications, so it can serve as an independent check on ``p_split``.
    """
    m.check(eps)
    jet = _jet(m, jet)
    G, dG, dGb, ddG = _metric_arrays(m, jet)
    # Ginv[j, i] = g^{jbar i}
    Gm = np.moveaxis(G, (0, 1), (-2, -1))
    Ginv = np.moveaxis(np.linalg.inv(Gm), (-2, -1), (0, 1))
    second = np.einsum("qp...,ijpq...->ij...", Ginv, ddG)
    t1 = np.einsum("qr...,sp...,rsj...,pqi...->ij...", Ginv, Ginv, dGb, dG)
    t2 = np.einsum("qr...,sp...,rsj...,iqp...->ij...", Ginv, Ginv, dGb, dG)
    t3 = np.einsum("qr...,sp...,rsi...,pjq...->ij...", Ginv, Ginv, dG, dGb)
    bracket = second + t1 - t2 - t3
    # P_{i jbar} dz^i ^ dzbar^j = -i bracket; coefficient of i dz^i^dzbar^j is -bracket
    return CurvatureForm(
        p_plus=_as_field(m, -bracket[0, 0]),
        p_minus=_as_field(m, -bracket[1, 1]),
        p_mixed=ScalarField(m.spec, -bracket[0, 1]),
    )


# --- Laplacians, connection differences, traces -------------------------------


def chern_laplacian(m: SplitMetric, u: ScalarField, eps=EPS_POS) -> ScalarField:
    """Delta u = g^{zbar z} u_{z zbar} + g^{wbar w} u_{w wbar}."""
    m.check(eps)
    sp = Spectrum(u)
    return sp.derivative("dzdzbar") / m.gplus + sp.derivative("dwdwbar") / m.gminus


def connection_difference(g: SplitMetric, h: SplitMetric, eps=EPS_POS) -> dict:
    """Squared norms of Upsilon(g_pm, h_pm) = nabla^{g_pm} - nabla^{h_pm}.

    In rank one the only components are Upsilon_{i a}^{a} = d_i log(g_pm / h_pm)
    with i running over z and w.  Keys ``plus_ggh`` / ``minus_ggh`` use the
    (g^-1, g^-1, h) contraction, ``plus_ghg`` / ``minus_ghg`` the
    (g^-1, h^-1, g) contraction.
    """
    g.check(eps)
    h.check(eps)
    out = {}
    for sign, name in ((+1, "plus"), (-1, "minus")):
        gc, hc = g.coefficient(sign), h.coefficient(sign)
        sp = Spectrum(log(gc, eps) - log(hc, eps))
        ups_z, ups_w = sp.derivative("dz"), sp.derivative("dw")
        along = ups_z.abs2() / g.gplus + ups_w.abs2() / g.gminus
        out[f"{name}_ggh"] = along * hc / gc
        out[f"{name}_ghg"] = along * gc / hc
    return out


def torsion_potential(f: ScalarField) -> ScalarField:
    """The (2,0) coefficient f_{z w} of the torsion potential d_- d_+ f."""
    return Spectrum(f).derivative("dzdw")


def norm20_sq(m: SplitMetric, beta: ScalarField) -> ScalarField:
    """|beta|^2_g for a (2,0)-form beta dz^dw in rank one."""
    return beta.abs2() / (m.gplus * m.gminus)


def covariant_derivatives_20(m: SplitMetric, beta: ScalarField, jet: MetricJet = None):
    """Chern covariant derivatives of beta dz^dw.

    Returns ``(nabla, nablabar)``, each a pair of fields for the directions
    (z, w) resp. (zbar, wbar).  Only the unbarred Christoffel symbols
    Gamma_{a z}^z = d_a log gplus and Gamma_{a w}^w = d_a log gminus enter.
    """
    jet = _jet(m, jet)
    sb = Spectrum(beta)
    nabla = []
    for op in ("dz", "dw"):
        gamma = jet.d(+1, op) / m.gplus + jet.d(-1, op) / m.gminus
        nabla.append(sb.derivative(op) - gamma * beta)
    nablabar = [sb.derivative("dzbar"), sb.derivative("dwbar")]
    return nabla, nablabar


def laplacian_20(m: SplitMetric, beta: ScalarField, jet: MetricJet = None) -> ScalarField:
    """Chern Laplacian g^{bbar a} nabla_a nabla_bbar of beta dz^dw.

    [Delta beta] = g^{bbar a} ( beta_{,bbar a} - Gamma_{a z}^z beta_{,bbar}
                                - Gamma_{a w}^w beta_{,bbar} ).
    """
    jet = _jet(m, jet)
    sb = Spectrum(beta)
    out = 0
    for a, (hol, bar, pair, coeff) in enumerate(
        (("dz", "dzbar", "dzdzbar", m.gplus), ("dw", "dwbar", "dwdwbar", m.gminus))
    ):
        gamma = jet.d(+1, hol) / m.gplus + jet.d(-1, hol) / m.gminus
        out = out + (sb.derivative(pair) - gamma * sb.derivative(bar)) / coeff
    return out


def gradient01_sq(m: SplitMetric, u: ScalarField) -> ScalarField:
    """|dbar u|^2_g = |u_zbar|^2 / gplus + |u_wbar|^2 / gminus."""
    sp = Spectrum(u)
    return sp.derivative("dzbar").abs2() / m.gplus + sp.derivative("dwbar").abs2() / m.gminus


def require_positive_fields(*fields, eps=EPS_POS):
    for f in fields:
        if reduce(f, "inf") <= eps:
            raise ConeViolation("reference metric is not positive", minimum=reduce(f, "inf"))
