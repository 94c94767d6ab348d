"""Spectral gap and criterion over a (k_ad, w_max) grid for A <-> B.

    python scripts/stability_grid.py --n 8 --out runs/grid.csv
"""
import argparse
import time
from dataclasses import dataclass
from pathlib import Path

from porestab.io import write_csv
from porestab.mesh import CylinderSpec, build_mesh
from porestab.model import SpeciesSystem, equilibrium_chemical_balance
from porestab.operators import build_velocity
from porestab.spectral import energy_identity_check, stability_verdict


@dataclass
class GridConfig:
    n: int = 12
    k: int = 40
    kappa: float = 0.25
    k_ad: tuple = (0.5, 1.0, 2.0)
    w_max: tuple = (0.0, 0.5, 1.0, 2.0)
    out: str = "runs/stability_grid.csv"


def run(cfg: GridConfig):
    mesh = build_mesh(CylinderSpec(1.0, 1.0), cfg.n, cfg.n, cfg.n)
    rows = []
    for k_ad in cfg.k_ad:
        sys = SpeciesSystem([1, 0], [0, 1], cfg.kappa, cfg.kappa, k_ad, 1.0, 1.0, 0.1)
        eq = equilibrium_chemical_balance(sys)
        for w_max in cfg.w_max:
            t0 = time.perf_counter()
            rep, op, pairs = stability_verdict(sys, mesh, eq, build_velocity(mesh, w_max),
                                               k=cfg.k, return_operator=True)
            rows.append((k_ad, w_max, rep.criterion_lhs, rep.criterion_rhs, rep.spectral_gap,
                         rep.verdict, energy_identity_check(op, pairs), len(rep.probe_hits)))
            print(f"k_ad={k_ad:<4g} w_max={w_max:<4g} gap={rep.spectral_gap:.5f} "
                  f"{rep.verdict} ({time.perf_counter() - t0:.1f}s)")
    return write_csv(cfg.out, ("k_ad", "w_max", "criterion_lhs", "criterion_rhs", "spectral_gap",
                               "verdict", "energy_identity", "probe_hits"), rows)


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=GridConfig.n, help="cells per direction")
    p.add_argument("--k", type=int, default=GridConfig.k)
    p.add_argument("--out", default=GridConfig.out)
    a = p.parse_args()
    Path(a.out).parent.mkdir(parents=True, exist_ok=True)
    print("wrote", run(GridConfig(n=a.n, k=a.k, out=a.out)))
