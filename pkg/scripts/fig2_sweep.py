"""Calibrated Gaussian noise as a function of the sampling rate (slow: many calibrations)."""

import argparse
import csv
import sys
from dataclasses import dataclass

from subacct.calibrate import FIG2_GAMMAS, FIG2_TARGETS, sweep_figure2


@dataclass(frozen=True)
class SweepConfig:
    gammas: tuple = FIG2_GAMMAS
    targets: tuple = FIG2_TARGETS
    delta: float = 1e-6
    k: int = 10_000
    step: float = 1e-3


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--k", type=int, default=SweepConfig.k)
    ap.add_argument("--step", type=float, default=SweepConfig.step)
    ap.add_argument("--gammas", type=float, nargs="+", default=list(FIG2_GAMMAS))
    a = ap.parse_args()
    cfg = SweepConfig(gammas=tuple(a.gammas), k=a.k, step=a.step)
    w = csv.DictWriter(sys.stdout, fieldnames=["scheme", "epsilon", "gamma", "sigma"],
                       lineterminator="\n")
    w.writeheader()
    for kind, eps in cfg.targets:
        # one target at a time so partial results appear early
        w.writerows(sweep_figure2(cfg.gammas, ((kind, eps),), cfg.delta, cfg.k, cfg.step))
        sys.stdout.flush()


if __name__ == "__main__":
    main()
