import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gkflow.config import CHECKS, RunConfig, load_config, parse_config, serialize
from gkflow.errors import ConfigError
from gkflow.grid import GridSpec, sup_abs
from gkflow.scenarios import PRESETS, build_scenario, field_from_expression, parse_background, parse_expression
from gkflow.snapshot import write_snapshot


def test_defaults_from_scenario_flag():
    cfg = parse_config("", {"scenario": "flat-stationary"})
    assert cfg == RunConfig()
    assert cfg.sigma_cfl == 0.25 and cfg.eps_pos == 1e-8 and cfg.mub_A == 1.0
    assert cfg.grid == GridSpec.reduced(64, 64)


@pytest.mark.parametrize(
    "text",
    ["sigma_cfl = -1", "n1 = 63", "t_end = 0", "bogus = 1", "n1 = 64\nn1 = 32", "checks = halfdet,nope", "just words"],
)
def test_invalid_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_error_carries_key_and_line():
    with pytest.raises(ConfigError) as exc:
        parse_config("# comment\nt_end = 2\nsigma_cfl = abc")
    assert exc.value.key == "sigma_cfl" and exc.value.line == 3


def test_file_parsing(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("scenario = generic-potential  # F2\nchecks = halfdet, fdot\ndealias = yes\ndt = none\n")
    cfg = load_config(p, {"t_end": "2"})
    assert cfg.scenario == "generic-potential" and cfg.checks == ("halfdet", "fdot")
    assert cfg.dealias is True and cfg.dt is None and cfg.t_end == 2.0
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")


def test_all_checks_expand():
    assert parse_config("checks = all").expanded_checks == CHECKS


@settings(max_examples=40, deadline=None)
@given(
    scenario=st.sampled_from(["flat-stationary", "kahler-reduction", "generic-potential", "conformal-background"]),
    n=st.integers(4, 64).map(lambda k: 2 * k),
    t_end=st.floats(1e-3, 50, allow_nan=False),
    sigma=st.floats(1e-3, 2.5),
    checks=st.lists(st.sampled_from(CHECKS), unique=True, max_size=4).map(tuple),
    dt=st.one_of(st.none(), st.floats(1e-6, 1e-2)),
    seed=st.integers(0, 2**31),
    dealias=st.booleans(),
)
def test_serialize_round_trip(scenario, n, t_end, sigma, checks, dt, seed, dealias):
    cfg = parse_config(
        "",
        dict(scenario=scenario, n1=n, n3=n, t_end=t_end, sigma_cfl=sigma, checks=checks, dt=dt, seed=seed, dealias=dealias),
    )
    assert parse_config(serialize(cfg)) == cfg


def test_expressions(spec64):
    fn = parse_expression("0.2*sin(x1)*cos(x3) - exp(0)/4 + pi")
    assert fn(math.pi / 2, 0.0, 0.0, 0.0) == pytest.approx(0.2 - 0.25 + math.pi)
    for bad in ("__import__('os')", "x1 ** 2", "sin(x1, x3)", "y + 1", "x1 / x3", "[1]"):
        with pytest.raises(ConfigError):
            parse_expression(bad)
    f = field_from_expression(spec64, "0.2*sin(x1)*sin(x3)")
    assert f.values[16, 16] == pytest.approx(0.2)


def test_backgrounds(spec32, tmp_path):
    bg = parse_background(spec32, "constant:2,3")
    assert np.all(bg.hplus.values == 2.0) and np.all(bg.hminus.values == 3.0)
    bg = parse_background(spec32, "conformal:0.2*cos(x1)")
    assert sup_abs(bg.hplus * bg.hminus - 1.0) < 1e-15
    write_snapshot(tmp_path / "h", {"hplus": bg.hplus, "hminus": bg.hminus})
    again = parse_background(spec32, f"snapshot:{tmp_path / 'h'}")
    assert np.array_equal(again.hplus.values, bg.hplus.values)
    for bad in ("constant:1", "constant:-1,1", "wavy", "snapshot:" + str(tmp_path / "none")):
        with pytest.raises(ConfigError):
            parse_background(spec32, bad)


def test_presets_determine_all_fields(spec32):
    for name in PRESETS:
        a, b = build_scenario(name, spec32), build_scenario(name, spec32)
        assert np.array_equal(a.initial.f.values, b.initial.f.values)
        assert np.array_equal(a.background.hplus.values, b.background.hplus.values)
    with pytest.raises(ConfigError):
        build_scenario("custom", spec32)
    sc = build_scenario("custom", spec32, "flat", "0.1*cos(x3)")
    assert sc.initial.f.values.max() == pytest.approx(0.1)
