"""Three product pairs of the two-record Laplace substitution example."""

import csv
import sys

from subacct.calibrate import experiment_fig3, strict_max_intervals


def main():
    eps, curves = experiment_fig3()
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["epsilon", *curves])
    for i, e in enumerate(eps):
        w.writerow([repr(float(e)), *(repr(float(c[i])) for c in curves.values())])
    for name, (margin, at) in strict_max_intervals(eps, curves).items():
        print(f"# {name} is the maximum by {margin:.4g} at eps {at:.3f}", file=sys.stderr)


if __name__ == "__main__":
    main()
