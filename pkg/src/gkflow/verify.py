"""Residual checks of the evolution identities and a-priori-estimate monitors.

Every identity is written as  d/dt X = R  for a field X built from one state.
The left side is a centered difference of X over a recorded triple of states
(t - d, t, t + d); the right side is assembled at t from the geometry module.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, InsufficientSnapshots
from .flow import Background, Controller, PotentialState, Trajectory, _kernel, assemble_metric, evolve, potential_rhs
from .geometry import (
    MetricJet,
    SplitMetric,
    chern_laplacian,
    connection_difference,
    covariant_derivatives_20,
    gradient01_sq,
    laplacian_20,
    norm20_sq,
    rho_transgression,
    torsion,
    torsion_tensor,
)
from .grid import EPS_POS, OPS, ScalarField, Spectrum, _symbol, log, reduce, sup_abs


@dataclass
class ResidualSeries:
    name: str
    times: list = field(default_factory=list)
    lhs_minus_rhs_sup: list = field(default_factory=list)
    dt_used: float = float("nan")

    @property
    def worst(self):
        return max(self.lhs_minus_rhs_sup) if self.lhs_minus_rhs_sup else float("nan")

    def rows(self):
        return [(t, r) for t, r in zip(self.times, self.lhs_minus_rhs_sup)]

    def write_csv(self, path):
        write_csv(path, ["time", "residual_sup"], self.rows())


MONITOR_COLUMNS = (
    "sup_f",
    "inf_f",
    "sup_df",
    "sup_fdot",
    "inf_fdot",
    "sup_trace_hg",
    "sup_trace_gh",
    "sup_torsion_potential_sq",
    "sup_T_sq",
    "phi_mub",
)


@dataclass
class MonitorSeries:
    times: list = field(default_factory=list)
    columns: dict = field(default_factory=lambda: {c: [] for c in MONITOR_COLUMNS})
    A: float = 1.0

    def append(self, t, row: dict):
        self.times.append(t)
        for c in MONITOR_COLUMNS:
            self.columns[c].append(row[c])

    def __getitem__(self, name):
        return np.asarray(self.columns[name])

    def constants(self) -> dict:
        """Smallest C with |f| <= C(1+t), |fdot| <= C and Phi <= C over the series.

        ``C_f_rate`` is the growth rate max sup|f(t) - f(0)| / t, which equals
        |log c| exactly when f grows linearly.
        """
        t = np.asarray(self.times)
        absf = np.maximum(np.abs(self["sup_f"]), np.abs(self["inf_f"]))
        absfd = np.maximum(np.abs(self["sup_fdot"]), np.abs(self["inf_fdot"]))
        later = t > 0
        rate = float(np.max(self["sup_df"][later] / t[later])) if np.any(later) else 0.0
        return {
            "C_f": float(np.max(absf / (1.0 + t))),
            "C_f_rate": rate,
            "C_fdot": float(np.max(absfd)),
            "C_phi": float(np.max(self["phi_mub"])),
        }

    def write_csv(self, path):
        rows = [[t] + [self.columns[c][i] for c in MONITOR_COLUMNS] for i, t in enumerate(self.times)]
        write_csv(path, ["time", *MONITOR_COLUMNS], rows)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if not isinstance(v, str) else v for v in row])


def max_increase(values) -> float:
    """Largest step-to-step increase of a series (<= 0 means nonincreasing)."""
    v = np.asarray(values, dtype=float)
    return float(np.max(np.diff(v))) if v.size > 1 else 0.0


# --- per-state geometric data ----------------------------------------------------


class Frame:
    """Everything the identities need at one recorded state."""

    def __init__(self, bg: Background, state: PotentialState, eps=EPS_POS):
        self.bg, self.state, self.eps = bg, state, eps
        self.t = state.t
        self.m = assemble_metric(bg, state, eps)

    @cached_property
    def jet(self):
        return MetricJet(self.m)

    @cached_property
    def tor(self):
        return torsion(self.m, self.jet, self.eps)

    @cached_property
    def fdot(self):
        if self.state.fdot_cache is not None:
            return self.state.fdot_cache
        return potential_rhs(self.bg, self.m, self.eps)

    @cached_property
    def beta(self):
        return Spectrum(self.state.f).derivative("dzdw")

    @cached_property
    def background(self) -> SplitMetric:
        return self.bg.metric_at(self.t)

    def lap(self, u):
        return chern_laplacian(self.m, u, self.eps)

    def coeff(self, sign):
        return self.m.coefficient(sign)

    def h(self, sign):
        return self.bg.hplus if sign > 0 else self.bg.hminus


# --- the evolution identities -----------------------------------------------------


def _halfdet(sign):
    def quantity(fr):
        return log(fr.coeff(sign), fr.eps) - log(fr.h(sign), fr.eps)

    def rhs(fr):
        rho = rho_transgression(fr.h(sign), fr.eps)
        tr_rho = rho.p_plus / fr.m.gplus + rho.p_minus / fr.m.gminus
        return fr.lap(quantity(fr)) + 0.5 * fr.tor.norm_sq - tr_rho

    return quantity, rhs


def _fdot_quantity(fr):
    return fr.fdot


def _fdot_rhs(fr):
    p = fr.bg.p_of_h
    return fr.lap(fr.fdot) - p.p_plus / fr.m.gplus + p.p_minus / fr.m.gminus


PSI_TERMS = (
    "h_div_minus",
    "h_quad_minus",
    "h_div_plus",
    "h_quad_plus",
    "bg_div_minus",
    "bg_quad_minus",
    "bg_div_plus",
    "bg_quad_plus",
    "cross_minus",
    "cross_plus",
)


def psi_terms(fr: Frame) -> dict:
    """The ten terms of the source Psi in d/dt f_zw = Delta f_zw + Psi.

    Background torsions are T^h (from h) and T~ (from the linear path
    omega_0 - t P(h)); T is the torsion of the flowing metric.  In rank one,
    with t~+ = d_w g~+ and t~- = d_z g~-:

      h_div_minus   (tr_{h-} nabla^h T^h)        h_quad_minus  -(h-)^-1(h+)^-1 T^h_{zw zbar} T^h_{z w wbar}
      h_div_plus   -(tr_{h+} nabla^h T^h)        h_quad_plus   -(h+)^-1(h-)^-1 T^h_{zw wbar} T^h_{w z zbar}
      bg_div_minus -(tr_{g-} nabla^g T~)         bg_quad_minus -t+ t~- / (g+ g-)
      bg_div_plus  +(tr_{g+} nabla^g T~)         bg_quad_plus  +t- t~+ / (g+ g-)
      cross_minus  +t+ t~- / (g+ g-)             cross_plus    -t- t~+ / (g+ g-)

    The signs of h_quad_plus, bg_quad_minus and bg_quad_plus are the ones
    that make the sum equal d_z d_w fdot - Delta f_zw; the two cross terms
    then cancel the background quadratic terms exactly.
    """
    m, jet = fr.m, fr.jet
    gp, gm = m.gplus, m.gminus
    hp, hm = fr.bg.hplus, fr.bg.hminus
    shp, shm = Spectrum(hp), Spectrum(hm)
    # torsion of h: T^h_{w z zbar} = d_w h+, T^h_{z w wbar} = d_z h-
    th_p, th_m = shp.derivative("dw"), shm.derivative("dz")
    out = {}
    out["h_div_minus"] = (
        shm.derivative("dzdw") - (shm.derivative("dw") / hm) * th_m - (shp.derivative("dw") / hp) * th_m
    ) / hm
    out["h_quad_minus"] = -(-th_p) * th_m / (hm * hp)
    out["h_div_plus"] = -(
        shp.derivative("dzdw") - (shp.derivative("dz") / hp) * th_p - (shm.derivative("dz") / hm) * th_p
    ) / hp
    out["h_quad_plus"] = -th_m * th_p / (hp * hm)

    bg = fr.background
    sbp, sbm = Spectrum(bg.gplus), Spectrum(bg.gminus)
    tt_p, tt_m = sbp.derivative("dw"), sbm.derivative("dz")
    t_p, t_m = fr.tor.t_plus, fr.tor.t_minus
    gam_w = jet.d(+1, "dw") / gp + jet.d(-1, "dw") / gm
    gam_z = jet.d(+1, "dz") / gp + jet.d(-1, "dz") / gm
    out["bg_div_minus"] = (-sbm.derivative("dzdw") + gam_w * tt_m) / gm
    out["bg_quad_minus"] = -t_p * tt_m / (gp * gm)
    out["bg_div_plus"] = (sbp.derivative("dzdw") - gam_z * tt_p) / gp
    out["bg_quad_plus"] = t_m * tt_p / (gp * gm)
    out["cross_minus"] = t_p * tt_m / (gp * gm)
    out["cross_plus"] = -t_m * tt_p / (gp * gm)
    return out


def psi(fr: Frame) -> ScalarField:
    terms = psi_terms(fr)
    total = 0
    for name in PSI_TERMS:
        total = total + terms[name]
    return total


def _torsion_potential_quantity(fr):
    return fr.beta


def _torsion_potential_rhs(fr):
    return laplacian_20(fr.m, fr.beta, fr.jet) + psi(fr)


def norm_evolution_terms(fr: Frame) -> dict:
    """Pieces of the evolution of |f_zw|^2_g = |f_zw|^2 / (g+ g-)."""
    m, beta = fr.m, fr.beta
    vol = m.gplus * m.gminus
    x = norm20_sq(m, beta)
    nab, nabbar = covariant_derivatives_20(m, beta, fr.jet)
    grad = nab[0].abs2() / (m.gplus * vol) + nab[1].abs2() / (m.gminus * vol)
    gradbar = nabbar[0].abs2() / (m.gplus * vol) + nabbar[1].abs2() / (m.gminus * vol)
    # 2 <Q, tr_g(beta (x) conj beta)> with Q = |T|^2 g / 2
    q_term = fr.tor.norm_sq * x
    source = 2.0 * (beta.conj() * psi(fr)).real / vol
    return {"norm": x, "grad": grad, "gradbar": gradbar, "q_term": q_term, "source": source}


def _norm_quantity(fr):
    return norm20_sq(fr.m, fr.beta)


def _norm_rhs(fr):
    p = norm_evolution_terms(fr)
    return fr.lap(p["norm"]) - p["grad"] - p["gradbar"] - p["q_term"] + p["source"]


def _require_flat_h(fr):
    if not fr.bg.h_is_flat():
        raise ConfigError("trace identities are only checked against constant h", key="background")


def _inverse_trace(sign):
    def quantity(fr):
        _require_flat_h(fr)
        return fr.h(sign) / fr.coeff(sign)

    def rhs(fr):
        ups = connection_difference(fr.m, SplitMetric(fr.bg.hplus, fr.bg.hminus), fr.eps)
        name = "plus" if sign > 0 else "minus"
        g, q = fr.coeff(sign), (fr.tor.q_plus if sign > 0 else fr.tor.q_minus)
        return fr.lap(quantity(fr)) - ups[f"{name}_ggh"] - fr.h(sign) * q / (g * g)

    return quantity, rhs


def _partial_trace(sign):
    def quantity(fr):
        _require_flat_h(fr)
        return fr.coeff(sign) / fr.h(sign)

    def rhs(fr):
        ups = connection_difference(fr.m, SplitMetric(fr.bg.hplus, fr.bg.hminus), fr.eps)
        name = "plus" if sign > 0 else "minus"
        q = fr.tor.q_plus if sign > 0 else fr.tor.q_minus
        return fr.lap(quantity(fr)) - ups[f"{name}_ghg"] + q / fr.h(sign)

    return quantity, rhs


def n2trace_rhs(fr: Frame) -> ScalarField:
    """Delta tr_{h+} g+ - <d^+ log(g+ h- / h+ g-), dbar^+ log(g+ g- / h+ h-)>_h."""
    _require_flat_h(fr)
    m, bg = fr.m, fr.bg
    a = Spectrum(log(m.gplus) - log(m.gminus) + log(bg.hminus) - log(bg.hplus)).derivative("dz")
    b = Spectrum(log(m.gplus) + log(m.gminus) - log(bg.hplus) - log(bg.hminus)).derivative("dzbar")
    return fr.lap(m.gplus / bg.hplus) - (a * b).real / bg.hplus


def _n2_quantity(fr):
    _require_flat_h(fr)
    return fr.m.gplus / fr.bg.hplus


IDENTITIES = {
    "halfdet_plus": _halfdet(+1),
    "halfdet_minus": _halfdet(-1),
    "fdot": (_fdot_quantity, _fdot_rhs),
    "torsion_potential": (_torsion_potential_quantity, _torsion_potential_rhs),
    "torsion_potential_norm": (_norm_quantity, _norm_rhs),
    "inversemetric_plus": _inverse_trace(+1),
    "inversemetric_minus": _inverse_trace(-1),
    "partialmetric_plus": _partial_trace(+1),
    "partialmetric_minus": _partial_trace(-1),
    "n2trace_plus": (_n2_quantity, n2trace_rhs),
}

CHECK_GROUPS = {
    "halfdet": ("halfdet_plus", "halfdet_minus"),
    "fdot": ("fdot",),
    "torsion_potential": ("torsion_potential",),
    "norm_evolution": ("torsion_potential_norm",),
    "trace_identities": (
        "inversemetric_plus",
        "inversemetric_minus",
        "partialmetric_plus",
        "partialmetric_minus",
        "n2trace_plus",
    ),
}


# --- centered differencing over recorded stencils --------------------------------


def stencils(states: Sequence, centers=None, rtol=1e-9):
    """Triples (prev, mid, next) of equally spaced recorded states.

    If ``centers`` is given only triples centered there are returned.
    """
    out = []
    for a, b, c in zip(states, states[1:], states[2:]):
        d0, d1 = b.t - a.t, c.t - b.t
        if d0 <= 0 or abs(d1 - d0) > rtol * max(d0, 1e-300) + 1e-13:
            continue
        if centers is not None and not any(abs(b.t - x) < 1e-9 for x in centers):
            continue
        out.append((a, b, c))
    return out


def _centered(states, centers):
    trip = stencils(states, centers)
    if not trip:
        raise InsufficientSnapshots("no equally spaced triple of recorded states to difference")
    return trip


def identity_series(traj: Trajectory, names: Sequence[str], centers=None, eps=EPS_POS) -> dict:
    """Residual series for the named identities, sharing frames across names."""
    for n in names:
        if n not in IDENTITIES:
            raise ConfigError(f"unknown identity {n!r}", key="checks")
    out = {n: ResidualSeries(n) for n in names}
    for a, b, c in _centered(traj.states, centers):
        fa, fb, fc = (Frame(traj.background, s, eps) for s in (a, b, c))
        d = b.t - a.t
        for n in names:
            q, r = IDENTITIES[n]
            lhs = (q(fc) - q(fa)) / (c.t - a.t)
            res = sup_abs(lhs - r(fb))
            out[n].times.append(b.t)
            out[n].lhs_minus_rhs_sup.append(res)
            out[n].dt_used = d
    return out


def check_halfdet(traj, centers=None):
    return list(identity_series(traj, CHECK_GROUPS["halfdet"], centers).values())


def check_fdot(traj, centers=None):
    return identity_series(traj, ["fdot"], centers)["fdot"]


def check_torsion_potential(traj, centers=None):
    return identity_series(traj, ["torsion_potential"], centers)["torsion_potential"]


def psi_sup_terms(bg: Background, state: PotentialState) -> dict:
    """sup |term| for each Psi term at one state."""
    fr = Frame(bg, state)
    return {k: sup_abs(v) for k, v in psi_terms(fr).items()}


@dataclass
class NormEvolutionReport:
    series: ResidualSeries
    sup_norm: list
    max_increase: float


def check_norm_evolution(traj, centers=None) -> NormEvolutionReport:
    series = identity_series(traj, ["torsion_potential_norm"], centers)["torsion_potential_norm"]
    sups = [reduce(norm20_sq(Frame(traj.background, s).m, Spectrum(s.f).derivative("dzdw")), "sup") for s in traj.states]
    return NormEvolutionReport(series, sups, max_increase(sups))


@dataclass
class TraceReport:
    series: list
    cross_formula: float  # sup |partialmetric RHS - n2trace RHS| over the sampled states


def check_trace_identities(traj, centers=None) -> TraceReport:
    if not traj.background.h_is_flat():
        raise ConfigError("trace identities require constant h", key="background")
    series = identity_series(traj, CHECK_GROUPS["trace_identities"], centers)
    cross = 0.0
    rhs_partial = IDENTITIES["partialmetric_plus"][1]
    for s in traj.states:
        fr = Frame(traj.background, s)
        cross = max(cross, sup_abs(rhs_partial(fr) - n2trace_rhs(fr)))
    return TraceReport(list(series.values()), cross)


# --- refinement studies ------------------------------------------------------------


def observed_orders(residuals: Sequence[float], ratio=2.0):
    r = np.asarray(residuals, dtype=float)
    return [float(math.log(r[i] / r[i + 1]) / math.log(ratio)) for i in range(len(r) - 1)]


@dataclass
class RefinementStudy:
    dts: list
    residuals: dict  # name -> worst residual per level
    orders: dict  # name -> observed order per halving

    def min_order(self, name):
        return min(self.orders[name])

    def rows(self):
        out = []
        for name, res in self.residuals.items():
            for i, dt in enumerate(self.dts):
                order = self.orders[name][i - 1] if i else float("nan")
                out.append((name, dt, res[i], order))
        return out

    def write_csv(self, path):
        write_csv(path, ["identity", "dt", "residual_sup", "order"], self.rows())


def refinement_study(
    bg: Background,
    s0: PotentialState,
    centers: Sequence[float],
    names: Sequence[str],
    dt0: float,
    levels: int = 4,
    eps=EPS_POS,
    on_level: Callable = None,
) -> RefinementStudy:
    """Residuals at the same centers for fixed steps dt0, dt0/2, ...

    Each level records the stencil (c - dt, c, c + dt) around every center, so
    the differencing width shrinks with the step.  ``on_level(dt, traj)`` sees
    every level's trajectory.
    """
    from .flow import stencil_times

    dts, residuals = [], {n: [] for n in names}
    for k in range(levels):
        dt = dt0 / 2**k
        rec = stencil_times(centers, dt)
        traj = evolve(bg, s0, max(rec), Controller(dt=dt, eps_pos=eps), record_times=rec)
        series = identity_series(traj, names, centers, eps)
        if on_level is not None:
            on_level(dt, traj)
        dts.append(dt)
        for n in names:
            residuals[n].append(series[n].worst)
    return RefinementStudy(dts, residuals, {n: observed_orders(residuals[n]) for n in names})


# --- monitors --------------------------------------------------------------------------


class EstimateMonitor:
    """Callback for ``evolve`` filling a MonitorSeries at every accepted step."""

    def __init__(self, bg: Background, A: float = 1.0, eps=EPS_POS):
        self.bg, self.eps = bg, eps
        self.series = MonitorSeries(A=A)
        self.f0 = None

    def __call__(self, state: PotentialState, m: SplitMetric):
        bg = self.bg
        fdot = state.fdot_cache if state.fdot_cache is not None else potential_rhs(bg, m, self.eps)
        gp, gm = m.gplus.values, m.gminus.values
        hp, hm = bg.hplus.values, bg.hminus.values
        beta = Spectrum(state.f).derivative("dzdw").values
        t_plus = Spectrum(m.gplus).derivative("dw").values
        t_minus = Spectrum(m.gminus).derivative("dz").values
        tr_hg = gp / hp + gm / hm
        tr_gh = hp / gp + hm / gm
        bsq = np.abs(beta) ** 2 / (gp * gm)
        t_sq = 2.0 * (np.abs(t_plus) ** 2 / (gm * gp * gp) + np.abs(t_minus) ** 2 / (gp * gm * gm))
        phi = np.log(tr_hg) + tr_gh + self.series.A * bsq
        v = state.f.values
        if self.f0 is None:
            self.f0 = v
        self.series.append(
            state.t,
            {
                "sup_f": float(v.max()),
                "inf_f": float(v.min()),
                "sup_df": float(np.max(np.abs(v - self.f0))),
                "sup_fdot": float(fdot.values.max()),
                "inf_fdot": float(fdot.values.min()),
                "sup_trace_hg": float(tr_hg.max()),
                "sup_trace_gh": float(tr_gh.max()),
                "sup_torsion_potential_sq": float(bsq.max()),
                "sup_T_sq": float(t_sq.max()),
                "phi_mub": float(phi.max()),
            },
        )


def monitor_estimates(bg, s0, t_end, ctl=Controller(), A=1.0, record_times=None):
    """Run the flow with an EstimateMonitor; returns (trajectory, MonitorSeries).

    On a guard violation the partial series is kept on ``exc.monitors``.
    """
    mon = EstimateMonitor(bg, A, ctl.eps_pos)
    try:
        traj = evolve(bg, s0, t_end, ctl, record_times=record_times, callbacks=[mon])
    except Exception as e:
        e.monitors = mon.series
        raise
    return traj, mon.series


# --- heat equation coupled to the flow --------------------------------------------------


@dataclass
class HeatSample:
    t: float
    f: ScalarField
    u: ScalarField


@dataclass
class HeatTrajectory:
    background: Background
    samples: list = field(default_factory=list)
    sup_grad_sq: list = field(default_factory=list)  # sup |dbar u|^2 after every step
    times: list = field(default_factory=list)


def gradient_terms(m: SplitMetric, u: ScalarField, jet: MetricJet = None) -> dict:
    """Pieces of the evolution of |dbar u|^2 for u solving the heat equation."""
    jet = jet if jet is not None else MetricJet(m)
    su = Spectrum(u)
    beta = [su.derivative("dzbar"), su.derivative("dwbar")]
    g = [m.gplus, m.gminus]
    hol, bar = ("dz", "dw"), ("dzbar", "dwbar")
    sb = [Spectrum(b) for b in beta]
    grad = gradbar = 0
    for i in range(2):
        for j in range(2):
            grad = grad + sb[i].derivative(hol[j]).abs2() / (g[j] * g[i])
            gamma = jet.d(+1 if i == 0 else -1, bar[j]) / g[i]
            gradbar = gradbar + (sb[i].derivative(bar[j]) - gamma * beta[i]).abs2() / (g[j] * g[i])
    tor = torsion(m, jet)
    q_term = tor.q_plus * beta[0].abs2() / g[0] ** 2 + tor.q_minus * beta[1].abs2() / g[1] ** 2
    T = torsion_tensor(m, jet)
    cross = 0
    for i in range(2):
        # (T o d dbar u)_{ibar} = g^{kbar k} g^{pbar p} conj(T_{k i pbar}) d_k beta_pbar
        acc = 0
        for k in range(2):
            for p in range(2):
                acc = acc + ScalarField(m.spec, np.conj(T[k, i, p])) * sb[p].derivative(hol[k]) / (g[k] * g[p])
        cross = cross + (beta[i].conj() * acc).real / g[i]
    return {"norm": gradient01_sq(m, u), "grad": grad, "gradbar": gradbar, "q_term": q_term, "cross": 2.0 * cross}


def coupled_heat(traj: Trajectory, u0: ScalarField, record_times=None, eps=EPS_POS) -> HeatTrajectory:
    """Solve du/dt = Delta_{g_t} u along the flow of ``traj``.

    The flow is re-integrated jointly with u using the exact step sequence of
    ``traj``, so the potentials agree with the recorded ones.  States are kept
    at the times in ``record_times`` (default: the recorded flow times).
    """
    if not u0.is_real:
        raise ConfigError("heat initial data must be real", key="u0")
    bg = traj.background
    ctl = Controller(eps_pos=eps)
    rk = _kernel(bg, ctl)
    spec = bg.spec
    s_zz, s_ww = rk.s_zz, rk.s_ww
    keep = sorted(record_times) if record_times is not None else [s.t for s in traj.states]
    t0 = traj.states[0].t

    def irfft(a):
        return np.fft.irfftn(a, s=spec.shape, axes=range(len(spec.shape)))

    def stage(t, f, u, n):
        gp, gm = rk.metric(t, f, n)
        uh = np.fft.rfftn(u)
        lap = irfft(uh * s_zz) / gp + irfft(uh * s_ww) / gm
        return np.log(gp) - np.log(gm) + rk.log_h, lap

    def record(t, f, u):
        out.samples.append(HeatSample(t, ScalarField(spec, f), ScalarField(spec, u)))

    s_z = _symbol(spec, OPS["dzbar"], False)
    s_w = _symbol(spec, OPS["dwbar"], False)

    def grad_sup(t, f, u):
        gp, gm = rk.metric(t, f)
        uh = np.fft.fftn(u)
        uz, uw = np.fft.ifftn(uh * s_z), np.fft.ifftn(uh * s_w)
        return float(np.max(np.abs(uz) ** 2 / gp + np.abs(uw) ** 2 / gm))

    out = HeatTrajectory(bg)
    t, f, u = t0, traj.states[0].f.values, u0.values
    if any(abs(t - k) < 1e-9 for k in keep):
        record(t, f, u)
    out.times.append(t)
    out.sup_grad_sq.append(grad_sup(t, f, u))
    for dt in traj.dts:
        a1, b1 = stage(t, f, u, 1)
        a2, b2 = stage(t + dt / 2, f + dt / 2 * a1, u + dt / 2 * b1, 2)
        a3, b3 = stage(t + dt / 2, f + dt / 2 * a2, u + dt / 2 * b2, 3)
        a4, b4 = stage(t + dt, f + dt * a3, u + dt * b3, 4)
        f = f + dt / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
        u = u + dt / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4)
        t = t + dt
        near = [k for k in keep if abs(t - k) < 1e-9]
        if near:
            t = near[0]
            record(t, f, u)
        out.times.append(t)
        out.sup_grad_sq.append(grad_sup(t, f, u))
    return out


@dataclass
class HeatReport:
    identity: ResidualSeries
    inequality_max: list  # sup of (d/dt - Delta)|dbar u|^2 + |nablabar dbar u|^2 per center
    sup_grad_increase: float


def check_gradient(heat: HeatTrajectory, centers=None, eps=EPS_POS) -> HeatReport:
    bg = heat.background
    series = ResidualSeries("gradient")
    ineq = []
    for a, b, c in _centered(heat.samples, centers):
        ms = [assemble_metric(bg, PotentialState(s.t, s.f), eps) for s in (a, b, c)]
        xa, xc = gradient01_sq(ms[0], a.u), gradient01_sq(ms[2], c.u)
        lhs = (xc - xa) / (c.t - a.t)
        p = gradient_terms(ms[1], b.u)
        lap = chern_laplacian(ms[1], p["norm"], eps)
        rhs = lap - p["grad"] - p["gradbar"] - p["q_term"] + p["cross"]
        series.times.append(b.t)
        series.lhs_minus_rhs_sup.append(sup_abs(lhs - rhs))
        series.dt_used = b.t - a.t
        ineq.append(float(np.max((lhs - lap + p["gradbar"]).values)))
    return HeatReport(series, ineq, max_increase(heat.sup_grad_sq))
