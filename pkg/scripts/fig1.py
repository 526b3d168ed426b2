"""Add vs remove curves of the Poisson subsampled Laplace mechanism, PLD and Monte Carlo."""

import argparse
import csv
import sys
from dataclasses import dataclass

import numpy as np

from subacct.calibrate import experiment_fig1
from subacct.mc import MCConfig


@dataclass(frozen=True)
class Fig1Config:
    scale: float = 1.0
    gamma: float | None = None  # None: smallest gamma with a visible crossing
    k_list: tuple = (1, 2, 16)
    step: float = 1e-5
    eps_points: int = 201
    mc: bool = False
    accuracy: float = 3e-3
    seed: int = 0


def run(cfg: Fig1Config):
    eps = np.linspace(0.0, 2.0, cfg.eps_points)
    mc_cfg = MCConfig(cfg.accuracy, 1e-2, tuple(eps), cfg.seed) if cfg.mc else None
    res = experiment_fig1(cfg.scale, cfg.gamma, cfg.k_list, eps, mc_cfg, cfg.step)
    rows = []
    for (k, direction, method), deltas in res.curves.items():
        rows += [{"gamma": res.gamma, "k": k, "direction": direction, "method": method,
                  "epsilon": float(e), "delta": float(d)} for e, d in zip(eps, deltas)]
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--gamma", type=float, default=None)
    ap.add_argument("--mc", action="store_true")
    ap.add_argument("--eps-points", type=int, default=201)
    a = ap.parse_args()
    rows = run(Fig1Config(gamma=a.gamma, mc=a.mc, eps_points=a.eps_points))
    w = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)


if __name__ == "__main__":
    main()
