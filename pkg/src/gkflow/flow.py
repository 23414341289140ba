"""Scalar-potential pluriclosed flow on the split torus.

The flowing metric is

    gplus  = gt_plus(t)  + f_{z zbar},     gt_plus(t)  = g0_plus  - t p_plus(h)
    gminus = gt_minus(t) - f_{w wbar},     gt_minus(t) = g0_minus - t p_minus(h)

and the potential obeys  df/dt = log(gplus hminus / (hplus gminus)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    BackgroundExpired,
    ConeViolation,
    ConfigError,
    GKFlowError,
    InsufficientSnapshots,
    NonFiniteField,
)
from .geometry import CurvatureForm, SplitMetric, p_split
from .grid import (
    EPS_POS,
    OPS,
    GridSpec,
    ScalarField,
    Spectrum,
    _symbol,
    check_finite,
    dealias,
    guard_positive,
    log,
    reduce,
    sup_abs,
)


@dataclass(frozen=True)
class Background:
    g0: SplitMetric
    hplus: ScalarField
    hminus: ScalarField
    p_of_h: CurvatureForm = None
    validity_horizon: float = None

    def __post_init__(self):
        guard_positive(self.hplus, EPS_POS, "hplus")
        guard_positive(self.hminus, EPS_POS, "hminus")
        self.g0.check()
        if self.p_of_h is None:
            object.__setattr__(self, "p_of_h", p_split(self.h))
        if self.validity_horizon is None:
            object.__setattr__(self, "validity_horizon", self._horizon())

    @classmethod
    def flat(cls, spec: GridSpec, hplus=1.0, hminus=1.0):
        one = ScalarField.constant(spec, 1.0)
        return cls(SplitMetric(one, one), one * hplus, one * hminus)

    @property
    def spec(self):
        return self.g0.spec

    @property
    def h(self):
        return SplitMetric(self.hplus, self.hminus)

    def _horizon(self):
        horizon = math.inf
        for g, p in ((self.g0.gplus, self.p_of_h.p_plus), (self.g0.gminus, self.p_of_h.p_minus)):
            pos = p.values > 0
            if np.any(pos):
                horizon = min(horizon, float(np.min(g.values[pos] / p.values[pos])))
        return horizon

    def metric_at(self, t) -> SplitMetric:
        """The linear background path omega_0 - t P(h)."""
        return SplitMetric(self.g0.gplus - t * self.p_of_h.p_plus, self.g0.gminus - t * self.p_of_h.p_minus)

    def h_is_flat(self, tol=1e-12):
        return all(float(np.ptp(h.values)) <= tol for h in (self.hplus, self.hminus))

    def regauge(self, a: ScalarField, tau: float) -> "Background":
        """Replace h_pm by exp(+-a / (2 tau)) h_pm; g0 is kept."""
        if not tau > 0:
            raise ConfigError("re-gauge time must be positive", key="tau")
        e = a.map(lambda v: np.exp(v / (2.0 * tau)))
        return Background(self.g0, self.hplus * e, self.hminus / e)


@dataclass(frozen=True)
class PotentialState:
    t: float
    f: ScalarField
    fdot_cache: Optional[ScalarField] = None

    @classmethod
    def initial(cls, spec: GridSpec, f0: ScalarField = None):
        return cls(0.0, f0 if f0 is not None else ScalarField.constant(spec, 0.0))


@dataclass(frozen=True)
class ClassData:
    a_plus: float
    a_minus: float
    pi_plus: float = 0.0
    pi_minus: float = 0.0

    def __post_init__(self):
        if not (self.a_plus > 0 and self.a_minus > 0):
            raise ConfigError("class pairings a_plus, a_minus must be positive", key="a")

    @classmethod
    def from_background(cls, bg: Background, tol=1e-12):
        ap, am = factor_areas(bg.spec)

        def pairing(p, area):
            # p(h) is a d-dbar of a periodic function, so its mean is zero up to roundoff
            v = reduce(p, "mean")
            return 0.0 if abs(v) <= tol * max(sup_abs(p), 1.0) else v * area

        return cls(
            a_plus=reduce(bg.g0.gplus, "mean") * ap,
            a_minus=reduce(bg.g0.gminus, "mean") * am,
            pi_plus=pairing(bg.p_of_h.p_plus, ap),
            pi_minus=pairing(bg.p_of_h.p_minus, am),
        )


def factor_areas(spec: GridSpec):
    """Areas of the z- and w-tori; the unstored x2, x4 periods default to 2 pi."""
    p = dict(zip(spec.axes, spec.periods))
    return p[1] * p.get(2, 2 * math.pi), p[3] * p.get(4, 2 * math.pi)


def tau_star(c: ClassData) -> float:
    t = math.inf
    for a, p in ((c.a_plus, c.pi_plus), (c.a_minus, c.pi_minus)):
        if p > 0:
            t = min(t, a / p)
    return t


# --- assembly and right-hand side ---------------------------------------------


def assemble_metric(bg: Background, s: PotentialState, eps=EPS_POS) -> SplitMetric:
    if s.t >= bg.validity_horizon:
        raise BackgroundExpired(f"t={s.t:.6g} is past the background validity horizon {bg.validity_horizon:.6g}")
    sp = Spectrum(s.f)
    gt = bg.metric_at(s.t)
    m = SplitMetric(gt.gplus + sp.derivative("dzdzbar"), gt.gminus - sp.derivative("dwdwbar"))
    guard_positive(m.gplus, eps, "gplus")
    guard_positive(m.gminus, eps, "gminus")
    return m


def potential_rhs(bg: Background, m: SplitMetric, eps=EPS_POS) -> ScalarField:
    return log(m.gplus, eps) + log(bg.hminus, eps) - log(bg.hplus, eps) - log(m.gminus, eps)


def rhs(bg: Background, s: PotentialState, eps=EPS_POS) -> ScalarField:
    return potential_rhs(bg, assemble_metric(bg, s, eps), eps)


def with_fdot(bg: Background, s: PotentialState, eps=EPS_POS) -> PotentialState:
    if s.fdot_cache is not None:
        return s
    return replace(s, fdot_cache=rhs(bg, s, eps))


def evaluate(bg: Background, s: PotentialState, eps=EPS_POS):
    """Assembled metric and the state with its right-hand side cached."""
    m = assemble_metric(bg, s, eps)
    if s.fdot_cache is None:
        s = replace(s, fdot_cache=potential_rhs(bg, m, eps))
    return s, m


# --- time stepping -------------------------------------------------------------


@dataclass(frozen=True)
class Controller:
    sigma: float = 0.25
    dt: Optional[float] = None  # fixed step; overrides the CFL rule
    eps_pos: float = EPS_POS
    dealias: bool = False
    max_steps: int = 10_000_000

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigError("sigma_cfl must be positive", key="sigma_cfl")
        if self.dt is not None and not self.dt > 0:
            raise ConfigError("dt must be positive", key="dt")
        if not self.eps_pos > 0:
            raise ConfigError("eps_pos must be positive", key="eps_pos")


def spectral_radius(m: SplitMetric) -> float:
    """sup of the linearized symbol (k1^2 + k2^2)/(4 gplus) + (k3^2 + k4^2)/(4 gminus)."""
    spec = m.spec
    kz = 0.25 * (spec.nyquist(1) ** 2 + spec.nyquist(2) ** 2)
    kw = 0.25 * (spec.nyquist(3) ** 2 + spec.nyquist(4) ** 2)
    return float(np.max(kz / m.gplus.values + kw / m.gminus.values))


def cfl_dt(bg: Background, s: PotentialState, ctl: Controller) -> float:
    if ctl.dt is not None:
        return ctl.dt
    return ctl.sigma / spectral_radius(assemble_metric(bg, s, ctl.eps_pos))


class _Kernel:
    """Array-level right-hand side used inside the RK stages."""

    def __init__(self, bg: Background, eps, use_dealias):
        spec = bg.spec
        self.bg, self.spec, self.eps, self.use_dealias = bg, spec, eps, use_dealias
        self.s_zz = np.ascontiguousarray(_symbol(spec, OPS["dzdzbar"], True).real)
        self.s_ww = np.ascontiguousarray(_symbol(spec, OPS["dwdwbar"], True).real)
        self.g0p, self.g0m = bg.g0.gplus.values, bg.g0.gminus.values
        self.pp, self.pm = bg.p_of_h.p_plus.values, bg.p_of_h.p_minus.values
        self.log_h = np.log(bg.hminus.values) - np.log(bg.hplus.values)

    def _guard(self, g, what, stage, t):
        lo = float(g.min())
        if not lo > self.eps:
            idx = np.unravel_index(np.argmin(g), g.shape)
            raise ConeViolation(f"{what} left the positive cone", lo, idx, stage, t)

    def metric(self, t, f, stage=None):
        """Coefficient arrays (gplus, gminus) for potential samples ``f`` at time t."""
        if t >= self.bg.validity_horizon:
            raise BackgroundExpired(f"t={t:.6g} is past the background validity horizon")
        if not np.all(np.isfinite(f)):
            raise NonFiniteField("potential contains NaN or Inf samples")
        fh = np.fft.rfftn(f)
        shape = self.spec.shape
        gp = self.g0p - t * self.pp + np.fft.irfftn(fh * self.s_zz, s=shape, axes=range(len(shape)))
        gm = self.g0m - t * self.pm - np.fft.irfftn(fh * self.s_ww, s=shape, axes=range(len(shape)))
        self._guard(gp, "gplus", stage, t)
        self._guard(gm, "gminus", stage, t)
        return gp, gm

    def evaluate(self, s: PotentialState):
        """(state with its undealiased rhs cached, metric) built from arrays."""
        gp, gm = self.metric(s.t, s.f.values)
        spec = self.spec
        if s.fdot_cache is None:
            s = replace(s, fdot_cache=ScalarField(spec, np.log(gp) - np.log(gm) + self.log_h))
        return s, SplitMetric(ScalarField(spec, gp), ScalarField(spec, gm))

    def __call__(self, t, f, stage=None):
        gp, gm = self.metric(t, f, stage)
        out = np.log(gp) - np.log(gm) + self.log_h
        if self.use_dealias:
            out = dealias(ScalarField(self.spec, out)).values
        return out


def _kernel(bg: Background, ctl: Controller) -> _Kernel:
    cache = bg.__dict__.setdefault("_kernels", {})
    key = (ctl.eps_pos, ctl.dealias)
    if key not in cache:
        cache[key] = _Kernel(bg, ctl.eps_pos, ctl.dealias)
    return cache[key]


def step(bg: Background, s: PotentialState, ctl: Controller, dt: float = None) -> PotentialState:
    """One classical RK4 step; every stage re-checks the positive cone."""
    if dt is None:
        dt = cfl_dt(bg, s, ctl)
    if not s.f.is_real:
        raise ConfigError("the potential must be real")
    rk = _kernel(bg, ctl)
    t, f = s.t, s.f.values
    if s.fdot_cache is not None:
        k1 = dealias(s.fdot_cache).values if ctl.dealias else s.fdot_cache.values
    else:
        k1 = rk(t, f, 1)
    k2 = rk(t + dt / 2, f + (dt / 2) * k1, 2)
    k3 = rk(t + dt / 2, f + (dt / 2) * k2, 3)
    k4 = rk(t + dt, f + dt * k3, 4)
    f_new = f + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    f_new = ScalarField(s.f.spec, f_new)
    check_finite(f_new, "potential")
    return PotentialState(t + dt, f_new)


# --- trajectories --------------------------------------------------------------


@dataclass
class Trajectory:
    background: Background
    states: list = field(default_factory=list)  # recorded PotentialStates, increasing t
    dts: list = field(default_factory=list)  # every accepted step size
    steps: int = 0
    error: Optional[GKFlowError] = None

    @property
    def times(self):
        return np.array([s.t for s in self.states])

    @property
    def final(self):
        return self.states[-1]

    def state_at(self, t, tol=1e-9) -> PotentialState:
        times = self.times
        i = int(np.argmin(np.abs(times - t)))
        if abs(times[i] - t) > tol * max(1.0, abs(t)):
            raise InsufficientSnapshots(f"no recorded state at t={t:.9g}")
        return self.states[i]

    def metric(self, s: PotentialState, eps=EPS_POS) -> SplitMetric:
        return assemble_metric(self.background, s, eps)


def stencil_times(centers: Sequence[float], delta: float):
    """Sorted set of times {c - delta, c, c + delta} for centered differencing."""
    out = set()
    for c in centers:
        for t in (c - delta, c, c + delta):
            if t >= -1e-15:
                out.add(round(max(t, 0.0), 12))
    return sorted(out)


def cadence(t_end: float, spacing: float):
    if spacing is None or spacing <= 0:
        return []
    n = int(math.floor(t_end / spacing + 1e-9))
    return [round(k * spacing, 12) for k in range(n + 1)]


def evolve(
    bg: Background,
    s0: PotentialState,
    t_end: float,
    ctl: Controller = Controller(),
    record_times: Sequence[float] = None,
    record_every_step: bool = False,
    callbacks: Sequence[Callable] = (),
) -> Trajectory:
    """Integrate to ``t_end``, landing exactly on every requested record time.

    Each callback is invoked as ``cb(state, metric)`` after every accepted step
    (and once at the start).  On a guard violation the raised exception carries
    the partial trajectory as ``exc.trajectory``.
    """
    if t_end >= bg.validity_horizon:
        raise BackgroundExpired(f"t_end={t_end:.6g} is past the validity horizon {bg.validity_horizon:.6g}")
    targets = sorted({float(t) for t in (record_times or []) if s0.t < t <= t_end} | {float(t_end)})
    traj = Trajectory(bg)
    s = s0
    try:
        rk = _kernel(bg, ctl)
        s, m = rk.evaluate(s)
        traj.states.append(s)
        for cb in callbacks:
            cb(s, m)
        ti = 0
        while ti < len(targets):
            target = targets[ti]
            dt = ctl.dt if ctl.dt is not None else ctl.sigma / spectral_radius(m)
            landing = False
            if s.t + dt * (1 + 1e-9) >= target:
                dt = target - s.t
                landing = True
            s = step(bg, s, ctl, dt)
            if landing:
                s = replace(s, t=target)
            s, m = rk.evaluate(s)
            traj.dts.append(dt)
            traj.steps += 1
            if traj.steps > ctl.max_steps:
                raise ConfigError("step budget exhausted", key="max_steps")
            if landing or record_every_step:
                traj.states.append(s)
            if landing:
                ti += 1
            for cb in callbacks:
                cb(s, m)
    except GKFlowError as e:
        traj.error = e
        e.trajectory = traj
        raise
    return traj


# --- normalized flow ------------------------------------------------------------


@dataclass(frozen=True)
class NormalizedSample:
    s: float
    metric: SplitMetric


def normalize_trajectory(traj: Trajectory, s_max: float = None, eps=EPS_POS):
    """Map omega(t) to omega_hat(s) = e^{-s} omega(e^s - 1) at every recorded state."""
    if s_max is not None and traj.final.t < math.expm1(s_max) * (1 - 1e-12):
        raise InsufficientSnapshots(
            f"trajectory ends at t={traj.final.t:.6g}, needs t={math.expm1(s_max):.6g} for s={s_max}"
        )
    out = []
    for st in traj.states:
        s = math.log1p(st.t)
        if s_max is not None and s > s_max * (1 + 1e-12):
            break
        m = traj.metric(st, eps)
        scale = 1.0 / (1.0 + st.t)
        out.append(NormalizedSample(s, SplitMetric(m.gplus * scale, m.gminus * scale)))
    return out


def _three_point(s0, s1, s2, y0, y1, y2):
    """Derivative at s1 of the quadratic through three nonuniform samples."""
    h0, h1 = s1 - s0, s2 - s1
    return (-h1 / (h0 * (h0 + h1))) * y0 + ((h1 - h0) / (h0 * h1)) * y1 + (h0 / (h1 * (h0 + h1))) * y2


def normalized_residual(samples, centers=None, eps=EPS_POS):
    """sup |d_s g_hat + P(g_hat) + g_hat| at interior samples; returns (s, residual) pairs.

    d_s g_hat is differenced as e^{-s} d_s(e^s g_hat) - g_hat, a three-point
    rule that is exact on the pure e^{-s} scaling mode.  ``centers`` restricts
    the evaluation to samples whose unnormalized time t = e^s - 1 is listed.
    """
    if len(samples) < 3:
        raise InsufficientSnapshots("need at least three normalized samples")
    out = []
    for a, b, c in zip(samples, samples[1:], samples[2:]):
        if centers is not None and not any(abs(math.expm1(b.s) - x) < 1e-9 for x in centers):
            continue
        p = p_split(b.metric, eps)
        worst = 0.0
        for attr, pc in (("gplus", p.p_plus), ("gminus", p.p_minus)):
            y = [getattr(x.metric, attr) * math.exp(x.s) for x in (a, b, c)]
            mid = getattr(b.metric, attr)
            ds = _three_point(a.s, b.s, c.s, *y) * math.exp(-b.s) - mid
            worst = max(worst, sup_abs(ds + pc + mid))
        out.append((b.s, worst))
    if not out:
        raise InsufficientSnapshots("no normalized samples at the requested centers")
    return out
