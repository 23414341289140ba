"""Command-line entry point: ``gkflow {run,verify,heat,tau-star,emit-heatmap}``.

Exit codes: 0 all checks pass, 2 a check failed, 3 cone violation, 4 configuration
error, 5 background expired, 6 non-finite field, 1 anything else from the engine.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

from .config import load_config
from .errors import ConfigError, GKFlowError
from .flow import ClassData, tau_star
from .lab import execute
from .scenarios import SCENARIOS, build_scenario
from .snapshot import emit_heatmap

EXIT_CHECK_FAILED = 2


def _pair(text, key):
    try:
        a, b = (float(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"expected two comma-separated numbers, got {text!r}", key=key) from None
    return a, b


def _overrides(args) -> dict:
    out = {}
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}", key=item)
        out[key.strip()] = value.strip()
    if args.scenario is not None:
        out["scenario"] = args.scenario
    if args.t_end is not None:
        out["t_end"] = args.t_end
    if args.checks is not None:
        out["checks"] = args.checks
    return out


def _out_dir(args) -> Path:
    if args.out:
        return Path(args.out)
    return Path(os.environ.get("GKFLOW_OUT_DIR", "gkflow-out"))


def _add_run_options(p):
    p.add_argument("--config", help="plain-text key = value configuration file")
    p.add_argument("--scenario", choices=SCENARIOS)
    p.add_argument("--t-end", type=float, dest="t_end")
    p.add_argument("--checks", help="comma-separated check names or 'all'")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any configuration key")
    p.add_argument("--out", help="output directory (default $GKFLOW_OUT_DIR or ./gkflow-out)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gkflow", description="Scalar-potential pluriclosed flow laboratory.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("run", "evolve a scenario and run the configured checks"),
        ("verify", "evolve and run checks (all of them unless --checks is given)"),
        ("heat", "evolve with the coupled heat equation and check the gradient estimate"),
    ):
        _add_run_options(sub.add_parser(name, help=text))
    p = sub.add_parser("tau-star", help="maximal existence time from class data")
    p.add_argument("--a", help="a_plus,a_minus")
    p.add_argument("--pi", help="pi_plus,pi_minus")
    _add_run_options(p)
    p = sub.add_parser("emit-heatmap", help="write a PGM image of one snapshot field")
    p.add_argument("snapshot", help="snapshot directory")
    p.add_argument("field", help="field name, e.g. gplus")
    p.add_argument("output", help="output .pgm path")
    return parser


def _run(args, command) -> int:
    overrides = _overrides(args)
    if command == "verify" and args.checks is None and "checks" not in overrides:
        overrides["checks"] = "all"
    cfg = load_config(args.config, overrides)
    if command == "heat" and "gradient" not in cfg.expanded_checks:
        from .config import replace

        cfg = replace(cfg, checks=cfg.checks + ("gradient",))
    out = _out_dir(args)
    report = execute(cfg, out, command)
    sys.stdout.write(report.render())
    return 0 if report.passed else EXIT_CHECK_FAILED


def _tau_star(args) -> int:
    if args.a is not None or args.pi is not None:
        if args.a is None:
            raise ConfigError("--pi needs --a", key="a")
        ap, am = _pair(args.a, "a")
        pp, pm = _pair(args.pi, "pi") if args.pi is not None else (0.0, 0.0)
        data = ClassData(ap, am, pp, pm)
    else:
        cfg = load_config(args.config, _overrides(args))
        sc = build_scenario(cfg.scenario, cfg.grid, cfg.background, cfg.initial_potential)
        data = ClassData.from_background(sc.background)
    t = tau_star(data)
    print("inf" if math.isinf(t) else f"{t:.15g}")
    return 0


def _heatmap(args) -> int:
    lo, hi = emit_heatmap(Path(args.snapshot), args.field, Path(args.output))
    note = " (constant field)" if lo == hi else ""
    print(f"{args.field}: min={lo!r} max={hi!r}{note} -> {args.output}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "tau-star":
            return _tau_star(args)
        if args.command == "emit-heatmap":
            return _heatmap(args)
        return _run(args, args.command)
    except GKFlowError as e:
        print(f"gkflow: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
