"""Closed-form field expressions and the preset model scenarios.

Expressions are sums of products of numbers, ``sin``/``cos``/``exp`` of
linear combinations of x1..x4, e.g. ``0.2*sin(x1)*sin(x3) - 0.05*cos(2*x1+x3)``.
They are parsed with :mod:`ast` and evaluated on the grid; nothing else is
callable.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .flow import Background, PotentialState
from .geometry import SplitMetric
from .grid import GridSpec, ScalarField, Spectrum
from .snapshot import read_snapshot

FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
VARIABLES = ("x1", "x2", "x3", "x4")

F1_POTENTIAL = "0.25*cos(2*x1) + 0.05*sin(3*x1)"
F2_POTENTIAL = "0.2*sin(x1)*sin(x3)"
F4_EXPONENT = "0.2*cos(x1)*cos(x3)"

SCENARIOS = ("flat-stationary", "kahler-reduction", "generic-potential", "conformal-background", "custom")


class _Evaluator(ast.NodeVisitor):
    def __init__(self, env, text):
        self.env, self.text = env, text

    def fail(self, node, why):
        raise ConfigError(f"bad expression {self.text!r}: {why}", key="expression")

    def visit_Expression(self, node):
        return self.visit(node.body)

    def visit_Constant(self, node):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            self.fail(node, "only numeric constants are allowed")
        return float(node.value)

    def visit_Name(self, node):
        if node.id == "pi":
            return np.pi
        if node.id not in self.env:
            self.fail(node, f"unknown name {node.id!r}")
        return self.env[node.id]

    def visit_UnaryOp(self, node):
        if isinstance(node.op, ast.USub):
            return -self.visit(node.operand)
        if isinstance(node.op, ast.UAdd):
            return self.visit(node.operand)
        self.fail(node, "unsupported unary operator")

    def visit_BinOp(self, node):
        ops = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply, ast.Div: np.divide}
        op = ops.get(type(node.op))
        if op is None:
            self.fail(node, "only + - * / are allowed")
        left, right = self.visit(node.left), self.visit(node.right)
        if isinstance(node.op, ast.Div) and not np.isscalar(right):
            self.fail(node, "division by a field is not allowed")
        return op(left, right)

    def visit_Call(self, node):
        if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
            self.fail(node, "only sin, cos and exp may be called")
        if len(node.args) != 1 or node.keywords:
            self.fail(node, "functions take exactly one argument")
        return FUNCTIONS[node.func.id](self.visit(node.args[0]))

    def generic_visit(self, node):
        self.fail(node, f"unsupported syntax {type(node).__name__}")


def parse_expression(text: str):
    """Compile ``text`` into a function of (x1, x2, x3, x4)."""
    try:
        tree = ast.parse(str(text).strip(), mode="eval")
    except SyntaxError as e:
        raise ConfigError(f"bad expression {text!r}: {e.msg}", key="expression") from None

    def fn(x1, x2, x3, x4):
        return _Evaluator(dict(zip(VARIABLES, (x1, x2, x3, x4))), text).visit(tree)

    # probe once so unsupported syntax surfaces at parse time
    probe = np.zeros(1)
    fn(probe, probe, probe, probe)
    return fn


def field_from_expression(spec: GridSpec, text: str) -> ScalarField:
    return ScalarField.from_function(spec, parse_expression(text))


def _load_field(spec, source, name):
    """A field from an expression or ``snapshot:<dir>`` (field ``name``)."""
    if str(source).startswith("snapshot:"):
        fields = read_snapshot(Path(str(source)[len("snapshot:"):]))
        if name not in fields:
            raise ConfigError(f"snapshot has no field {name!r}", key=name)
        f = fields[name]
        if f.spec != spec:
            raise ConfigError(f"snapshot field {name!r} lives on a different grid", key=name)
        return f
    return field_from_expression(spec, source)


def parse_background(spec: GridSpec, text: str) -> Background:
    """``constant:a,b`` | ``conformal:<expr>`` | ``snapshot:<dir>`` (fields hplus, hminus).

    The conformal form sets h_pm = exp(+-phi/2) with phi the expression.  The
    initial metric is always flat.
    """
    kind, _, rest = str(text).partition(":")
    one = ScalarField.constant(spec, 1.0)
    flat = SplitMetric(one, one)
    if kind == "flat" and not rest:
        return Background(flat, one, one)
    if kind == "constant":
        try:
            a, b = (float(v) for v in rest.split(","))
        except ValueError:
            raise ConfigError(f"constant background needs two numbers, got {rest!r}", key="background") from None
        if not (a > 0 and b > 0):
            raise ConfigError("constant background values must be positive", key="background")
        return Background(flat, one * a, one * b)
    if kind == "conformal":
        phi = field_from_expression(spec, rest)
        return Background(flat, (0.5 * phi).map(np.exp), (-0.5 * phi).map(np.exp))
    if kind == "snapshot":
        fields = read_snapshot(Path(rest))
        try:
            hp, hm = fields["hplus"], fields["hminus"]
        except KeyError:
            raise ConfigError("background snapshot needs hplus and hminus fields", key="background") from None
        return Background(flat, hp, hm)
    raise ConfigError(f"unknown background specification {text!r}", key="background")


@dataclass(frozen=True)
class Scenario:
    name: str
    background: Background
    initial: PotentialState


PRESETS = {
    "flat-stationary": ("flat", "0"),
    "kahler-reduction": ("flat", F1_POTENTIAL),
    "generic-potential": ("flat", F2_POTENTIAL),
    "conformal-background": (f"conformal:{F4_EXPONENT}", F2_POTENTIAL),
}


def build_scenario(name: str, spec: GridSpec, background: str = None, potential: str = None) -> Scenario:
    """Fields for a preset; ``background``/``potential`` override the preset (required for custom)."""
    if name not in SCENARIOS:
        raise ConfigError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}", key="scenario")
    if name == "custom":
        if background is None or potential is None:
            raise ConfigError("custom scenario needs background and initial_potential", key="scenario")
        bg_text, f_text = background, potential
    else:
        bg_text, f_text = PRESETS[name]
        bg_text = background if background is not None else bg_text
        f_text = potential if potential is not None else f_text
    bg = parse_background(spec, bg_text)
    f0 = _load_field(spec, f_text, "f")
    return Scenario(name, bg, PotentialState(0.0, f0))


def random_admissible_metric(spec: GridSpec, rng: np.random.Generator, modes: int = 4, amp: float = 0.1) -> SplitMetric:
    """Band-limited g = (1 + a(z) + F_{z zbar}, 1 + b(w) - F_{w wbar}) with random a, b, F.

    Wavenumbers stay in {-2..2} per axis so everything is resolved on grids of
    size >= 8.  Redraws until both coefficients exceed 1/2.
    """
    c = spec.coords()
    x = [c[f"x{i}"] for i in (1, 2, 3, 4)]
    present = [i in spec.axes for i in (1, 2, 3, 4)]

    def wave(axes_mask, scale):
        out = 0.0
        for _ in range(modes):
            k = rng.integers(-2, 3, size=4) * np.array(axes_mask)
            phase = rng.uniform(0.0, 2 * np.pi)
            out = out + scale * rng.normal() * np.cos(sum(k[i] * x[i] for i in range(4)) + phase)
        return ScalarField(spec, np.broadcast_to(out, spec.shape))

    for _ in range(100):
        a = wave([present[0], present[1], 0, 0], amp)
        b = wave([0, 0, present[2], present[3]], amp)
        F = wave(present, amp)
        sp = Spectrum(F)
        m = SplitMetric(1.0 + a + sp.derivative("dzdzbar"), 1.0 + b - sp.derivative("dwdwbar"))
        if min(m.gplus.values.min(), m.gminus.values.min()) > 0.5:
            return m
    raise ConfigError("could not draw a positive random metric; lower the amplitude", key="amp")
