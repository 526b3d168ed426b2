"""Check that the remove curve dominates the add curve for subsampled Gaussian pairs."""

import sys

from subacct.calibrate import CONJECTURE_GRID, conjecture_sweep


def main():
    cells, witnesses = conjecture_sweep(CONJECTURE_GRID)
    print(f"{cells} cells checked, {len(witnesses)} violations")
    for w in witnesses[:20]:
        print(w)
    sys.exit(1 if witnesses else 0)


if __name__ == "__main__":
    main()
