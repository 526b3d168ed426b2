"""Upper and lower epsilon bounds for WOR substitution, with an RDP reference."""

import argparse
import csv
import sys

from subacct.calibrate import experiment_fig4


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sigma", type=float, default=4.0)
    ap.add_argument("--gamma", type=float, default=0.05)
    ap.add_argument("--k", type=int, default=1000)
    a = ap.parse_args()
    rows = experiment_fig4(a.sigma, a.gamma, a.k)
    w = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)


if __name__ == "__main__":
    main()
