"""Periodic grids, scalar fields and spectral Wirtinger calculus.

Complex coordinates are z = x1 + i x2 and w = x3 + i x4 with the Wirtinger
normalization

    d/dz = (d/dx1 - i d/dx2) / 2,        d/dzbar = (d/dx1 + i d/dx2) / 2,

and likewise for w.  In particular d/dz d/dzbar = (d2/dx1^2 + d2/dx2^2) / 4,
which is where every factor of 1/4 in the package comes from.

In ``reduced2d`` mode fields are stored on the (x1, x3) torus only and are
understood to be constant in x2 and x4, so d/dz = d/dx1 / 2 there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConeViolation, ConfigError, NonFiniteField

REDUCED = "reduced2d"
FULL = "full4d"

EPS_POS = 1e-8

# Wirtinger multi-indices (z, zbar, w, wbar).
OPS = {
    "dz": (1, 0, 0, 0),
    "dzbar": (0, 1, 0, 0),
    "dw": (0, 0, 1, 0),
    "dwbar": (0, 0, 0, 1),
    "dzdzbar": (1, 1, 0, 0),
    "dwdwbar": (0, 0, 1, 1),
    "dzdw": (1, 0, 1, 0),
    "dzbardwbar": (0, 1, 0, 1),
    "dzdwbar": (1, 0, 0, 1),
    "dzbardw": (0, 1, 1, 0),
    "mixed-4th": (1, 1, 1, 1),
}


@dataclass(frozen=True)
class GridSpec:
    mode: str = REDUCED
    sizes: tuple = (64, 64)
    periods: tuple = None

    def __post_init__(self):
        if self.mode not in (REDUCED, FULL):
            raise ConfigError(f"unknown grid mode {self.mode!r}", key="mode")
        naxes = 2 if self.mode == REDUCED else 4
        sizes = tuple(int(n) for n in self.sizes)
        if len(sizes) != naxes:
            raise ConfigError(f"{self.mode} needs {naxes} sizes, got {len(sizes)}", key="sizes")
        for n in sizes:
            if n < 8 or n % 2:
                raise ConfigError(f"grid sizes must be even and >= 8, got {n}", key="sizes")
        periods = self.periods
        if periods is None:
            periods = (2 * math.pi,) * naxes
        periods = tuple(float(p) for p in periods)
        if len(periods) != naxes:
            raise ConfigError(f"{self.mode} needs {naxes} periods", key="periods")
        if not all(p > 0 and math.isfinite(p) for p in periods):
            raise ConfigError("periods must be positive", key="periods")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "periods", periods)

    @classmethod
    def reduced(cls, n1=64, n3=64, l1=2 * math.pi, l3=2 * math.pi):
        return cls(REDUCED, (n1, n3), (l1, l3))

    @property
    def reduced2d(self):
        return self.mode == REDUCED

    @property
    def axes(self):
        """Real coordinate labels stored by this grid, e.g. (1, 3)."""
        return (1, 3) if self.reduced2d else (1, 2, 3, 4)

    @property
    def shape(self):
        return self.sizes

    @property
    def volume(self):
        return float(np.prod(self.periods))

    def period(self, axis):
        return self.periods[self.axes.index(axis)]

    def size(self, axis):
        return self.sizes[self.axes.index(axis)]

    def spacing(self, axis):
        return self.period(axis) / self.size(axis)

    def coords(self):
        """Coordinate arrays x1..x4, broadcastable against the field shape."""
        out = {}
        nd = len(self.sizes)
        for pos, axis in enumerate(self.axes):
            n, length = self.sizes[pos], self.periods[pos]
            shape = [1] * nd
            shape[pos] = n
            out[f"x{axis}"] = (np.arange(n) * (length / n)).reshape(shape)
        for axis in (1, 2, 3, 4):
            out.setdefault(f"x{axis}", np.zeros([1] * nd))
        return out

    def nyquist(self, axis):
        """Largest resolved angular wavenumber along a real axis (0 if absent)."""
        if axis not in self.axes:
            return 0.0
        return (self.size(axis) // 2) * 2 * math.pi / self.period(axis)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real or complex samples of a function on a periodic grid.

    ``values`` is stored read-only with shape ``spec.shape`` (row-major).
    """

    spec: GridSpec
    values: np.ndarray
    kind: str = field(default=None)

    def __post_init__(self):
        arr = np.asarray(self.values)
        kind = self.kind
        if kind is None:
            kind = "complex" if np.iscomplexobj(arr) else "real"
        if kind == "real":
            if np.iscomplexobj(arr):
                arr = arr.real
            arr = np.array(arr, dtype=np.float64)
        elif kind == "complex":
            arr = np.array(arr, dtype=np.complex128)
        else:
            raise ConfigError(f"unknown field kind {kind!r}")
        if arr.shape != self.spec.shape:
            arr = np.broadcast_to(arr, self.spec.shape).copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "kind", kind)

    # construction helpers
    @classmethod
    def constant(cls, spec, value):
        return cls(spec, np.full(spec.shape, value))

    @classmethod
    def from_function(cls, spec, fn):
        """Sample ``fn(x1, x2, x3, x4)`` on the grid."""
        c = spec.coords()
        return cls(spec, np.broadcast_to(fn(c["x1"], c["x2"], c["x3"], c["x4"]), spec.shape))

    @property
    def is_real(self):
        return self.kind == "real"

    @property
    def real(self):
        return ScalarField(self.spec, self.values.real)

    @property
    def imag(self):
        return ScalarField(self.spec, self.values.imag)

    def conj(self):
        return self if self.is_real else ScalarField(self.spec, self.values.conj())

    def abs2(self):
        v = self.values
        return ScalarField(self.spec, v * v if self.is_real else (v * v.conj()).real)

    def map(self, fn):
        return ScalarField(self.spec, fn(self.values))

    # arithmetic
    def _other(self, other):
        if isinstance(other, ScalarField):
            if other.spec != self.spec:
                raise ConfigError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return ScalarField(self.spec, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.spec, self.values - self._other(other))

    def __rsub__(self, other):
        return ScalarField(self.spec, self._other(other) - self.values)

    def __mul__(self, other):
        return ScalarField(self.spec, self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return ScalarField(self.spec, self.values / self._other(other))

    def __rtruediv__(self, other):
        return ScalarField(self.spec, self._other(other) / self.values)

    def __neg__(self):
        return ScalarField(self.spec, -self.values)

    def __pow__(self, p):
        return ScalarField(self.spec, self.values**p)

    def __repr__(self):
        return f"ScalarField({self.spec.mode}, {self.spec.sizes}, {self.kind})"


def check_finite(f, what="field"):
    if not np.all(np.isfinite(f.values)):
        raise NonFiniteField(f"{what} contains NaN or Inf samples")


# --- spectral differentiation ------------------------------------------------


def _axis_k(spec, axis, real_fft, odd):
    """Angular wavenumbers along ``axis`` in FFT order, Nyquist zeroed if ``odd``."""
    n = spec.size(axis)
    length = spec.period(axis)
    last = spec.axes.index(axis) == len(spec.axes) - 1
    if real_fft and last:
        k = np.fft.rfftfreq(n, d=length / (2 * math.pi * n))
    else:
        k = np.fft.fftfreq(n, d=length / (2 * math.pi * n))
    if odd:
        k = k.copy()
        k[np.isclose(np.abs(k), n // 2 * 2 * math.pi / length)] = 0.0
    shape = [1] * len(spec.axes)
    shape[spec.axes.index(axis)] = k.size
    return k.reshape(shape)


def _pair_symbol(spec, real_fft, a, b, re_axis, im_axis):
    """Symbol of (d/dz)^a (d/dzbar)^b for the pair (x_re, x_im).

    (ik_re + k_im)^a (ik_re - k_im)^b / 2^(a+b), expanded in monomials so that
    the Nyquist mode is dropped exactly in the factors of odd degree.
    """
    if a == 0 and b == 0:
        return 1.0
    has_im = im_axis in spec.axes
    # coefficients c[p, q] of (i k_re)^p (k_im)^q
    poly = {(0, 0): 1.0 + 0j}
    for sign in [1] * a + [-1] * b:
        new = {}
        for (p, q), c in poly.items():
            new[(p + 1, q)] = new.get((p + 1, q), 0) + c
            new[(p, q + 1)] = new.get((p, q + 1), 0) + sign * c
        poly = new
    total = 0.0
    for (p, q), c in poly.items():
        if c == 0 or (q > 0 and not has_im):
            continue
        term = c * (1j * _axis_k(spec, re_axis, real_fft, p % 2 == 1)) ** p
        if q:
            term = term * _axis_k(spec, im_axis, real_fft, q % 2 == 1) ** q
        total = total + term
    return total / 2 ** (a + b)


@lru_cache(maxsize=256)
def _symbol(spec, index, real_fft):
    nz, nzb, nw, nwb = index
    s = _pair_symbol(spec, real_fft, nz, nzb, 1, 2) * _pair_symbol(spec, real_fft, nw, nwb, 3, 4)
    s = np.asarray(s, dtype=np.complex128)
    s.setflags(write=False)
    return s


def _resolve(op):
    if isinstance(op, str):
        try:
            return OPS[op]
        except KeyError:
            raise ConfigError(f"unknown derivative {op!r}") from None
    index = tuple(int(i) for i in op)
    if len(index) != 4 or min(index) < 0:
        raise ConfigError(f"bad Wirtinger multi-index {op!r}")
    return index


def _preserves_real(spec, index):
    if spec.reduced2d:
        return True
    nz, nzb, nw, nwb = index
    return nz == nzb and nw == nwb


class Spectrum:
    """Fourier transform of one field, reusable for several derivatives."""

    def __init__(self, f: ScalarField):
        check_finite(f)
        self.field = f
        self.spec = f.spec
        self._real = f.is_real
        self._rhat = np.fft.rfftn(f.values) if self._real else None
        self._chat = None

    def _full(self):
        if self._chat is None:
            self._chat = np.fft.fftn(self.field.values)
        return self._chat

    def derivative(self, op) -> ScalarField:
        index = _resolve(op)
        spec = self.spec
        if self._real and _preserves_real(spec, index):
            shape = spec.shape
            out = np.fft.irfftn(self._rhat * _symbol(spec, index, True), s=shape, axes=range(len(shape)))
            return ScalarField(spec, out)
        return ScalarField(spec, np.fft.ifftn(self._full() * _symbol(spec, index, False)))


def differentiate(f: ScalarField, op) -> ScalarField:
    """Spectral Wirtinger derivative of ``f``.

    ``op`` is one of the names in ``OPS`` or a multi-index (z, zbar, w, wbar).
    In reduced2d mode any derivative of a real field is real.
    """
    return Spectrum(f).derivative(op)


def derivatives(f: ScalarField, ops: Iterable) -> dict:
    """Several derivatives of ``f`` sharing a single forward transform."""
    sp = Spectrum(f)
    return {op: sp.derivative(op) for op in ops}


def dealias(f: ScalarField) -> ScalarField:
    """2/3-rule truncation of every stored axis."""
    spec = f.spec
    hat = np.fft.fftn(f.values)
    mask = np.ones(spec.shape, dtype=bool)
    for pos, axis in enumerate(spec.axes):
        n = spec.sizes[pos]
        m = np.abs(np.fft.fftfreq(n, d=1.0 / n)) < n / 3.0
        shape = [1] * len(spec.axes)
        shape[pos] = n
        mask = mask & m.reshape(shape)
    out = np.fft.ifftn(hat * mask)
    return ScalarField(spec, out.real if f.is_real else out)


# --- reductions and pointwise maps -------------------------------------------


def reduce(f: ScalarField, kind: str) -> float:
    """sup / inf / mean / l2 / integral of a field (modulus for complex data)."""
    check_finite(f)
    v = f.values if f.is_real else np.abs(f.values)
    if kind == "sup":
        return float(v.max())
    if kind == "inf":
        return float(v.min())
    if kind == "mean":
        if f.is_real:
            return float(np.mean(f.values))
        return complex(np.mean(f.values))
    if kind == "integral":
        m = np.mean(f.values)
        return float(m * f.spec.volume) if f.is_real else complex(m * f.spec.volume)
    if kind == "l2":
        return float(math.sqrt(np.mean(v * v) * f.spec.volume))
    raise ConfigError(f"unknown reduction {kind!r}")


def sup_abs(f: ScalarField) -> float:
    """max |f| over the grid (the sup norm)."""
    check_finite(f)
    return float(np.max(np.abs(f.values)))


def guard_positive(f: ScalarField, eps=EPS_POS, what="field"):
    """Raise ConeViolation unless min(f) > eps; returns the minimum."""
    check_finite(f, what)
    idx = np.unravel_index(np.argmin(f.values), f.spec.shape)
    m = float(f.values[idx])
    if not m > eps:
        raise ConeViolation(f"{what} is not positive", minimum=m, location=idx)
    return m


def pointwise(*fields: ScalarField, fn: Callable, positive: Sequence[int] = (), eps=EPS_POS) -> ScalarField:
    """Apply ``fn`` sample-wise; arguments listed in ``positive`` must stay above eps."""
    spec = fields[0].spec
    for i, f in enumerate(fields):
        if f.spec != spec:
            raise ConfigError("pointwise arguments live on different grids")
        if i in positive:
            guard_positive(f, eps, what=f"argument {i}")
    return ScalarField(spec, fn(*(f.values for f in fields)))


def log(f: ScalarField, eps=EPS_POS) -> ScalarField:
    return pointwise(f, fn=np.log, positive=(0,), eps=eps)


def quotient(num: ScalarField, den: ScalarField, eps=EPS_POS) -> ScalarField:
    return pointwise(num, den, fn=np.divide, positive=(1,), eps=eps)
