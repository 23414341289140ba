"""Observed convergence orders of all evolution identities under dt halving.

    python3 scripts/refinement_orders.py --scenario generic-potential --n 64 --levels 5
"""

import argparse
import time
from dataclasses import dataclass

from gkflow.grid import GridSpec
from gkflow.scenarios import build_scenario
from gkflow.verify import CHECK_GROUPS, refinement_study


@dataclass
class Config:
    scenario: str = "generic-potential"
    n: int = 64
    dt0: float = 4e-3
    levels: int = 4
    centers: tuple = (0.25, 0.5, 1.0)
    out: str = "refinement.csv"


def main(cfg: Config):
    sc = build_scenario(cfg.scenario, GridSpec.reduced(cfg.n, cfg.n))
    names = [n for g in CHECK_GROUPS.values() for n in g]
    if cfg.scenario == "conformal-background":
        # trace identities assume a flat background metric h
        names = [n for n in names if n not in CHECK_GROUPS["trace_identities"]]
    t0 = time.perf_counter()
    study = refinement_study(sc.background, sc.initial, list(cfg.centers), names, cfg.dt0, levels=cfg.levels)
    print(f"{len(names)} identities, dts {', '.join(f'{d:g}' for d in study.dts)} ({time.perf_counter() - t0:.1f}s)")
    for name in names:
        res = " ".join(f"{r:.2e}" for r in study.residuals[name])
        print(f"{name:24s} {res}  min order {study.min_order(name):.3f}")
    study.write_csv(cfg.out)
    print(f"wrote {cfg.out}")


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--scenario", default=Config.scenario)
    p.add_argument("--n", type=int, default=Config.n)
    p.add_argument("--dt0", type=float, default=Config.dt0)
    p.add_argument("--levels", type=int, default=Config.levels)
    p.add_argument("--out", default=Config.out)
    main(Config(**vars(p.parse_args())))
