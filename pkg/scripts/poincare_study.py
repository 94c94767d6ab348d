"""Convergence of the discrete surface Poincare constant to min(1/R^2, pi^2/h^2).

    python scripts/poincare_study.py
"""
import argparse
from dataclasses import dataclass
from pathlib import Path

from porestab.io import write_csv
from porestab.mesh import CylinderSpec, build_mesh, poincare_constant_surface, poincare_oracle


@dataclass
class PoincareStudy:
    shapes: tuple = ((1.0, 1.0), (10.0, 1.0), (1.0, 5.0), (1.0, 3.0))
    resolutions: tuple = (16, 32, 64, 128)
    out: str = "runs/poincare_study.csv"


def run(cfg: PoincareStudy):
    rows = []
    for radius, height in cfg.shapes:
        oracle = poincare_oracle(radius, height)
        prev = None
        for n in cfg.resolutions:
            _, mu = poincare_constant_surface(build_mesh(CylinderSpec(radius, height), 2, n, n))
            err = abs(mu - oracle) / oracle
            order = "" if prev is None else f"{(prev / err):.2f}"
            rows.append((radius, height, n, mu, oracle, err))
            print(f"R={radius:<5g} h={height:<4g} n={n:<4d} mu_1={mu:.8f} err={err:.2e} {order}")
            prev = err
    Path(cfg.out).parent.mkdir(parents=True, exist_ok=True)
    return write_csv(cfg.out, ("radius", "height", "n", "mu_1", "oracle", "rel_error"), rows)


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default=PoincareStudy.out)
    print("wrote", run(PoincareStudy(out=p.parse_args().out)))
