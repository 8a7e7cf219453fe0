#!/usr/bin/env python3
"""Print the tracial magnetization rate curve next to its closed form."""
import math

import numpy as np

from ldp_lab import lattice as lat
from ldp_lab.ldp import rate_curve
from ldp_lab.states import Tracial


def main() -> None:
    x = np.round(np.arange(-0.8, 0.81, 0.1), 10)
    n_list = [50, 100, 200, 400]
    curve = rate_curve(Tracial(), lat.magnetization(), n_list, x, eps=0.02, path="dp")
    exact = -((1 + x) / 2 * np.log1p(x) + (1 - x) / 2 * np.log1p(-x))
    print("x      " + "  ".join(f"n={n:<6}" for n in n_list) + "  limit")
    for i, xi in enumerate(x):
        row = "  ".join(f"{curve.values[j, i]:+.5f}" for j in range(len(n_list)))
        print(f"{xi:+.2f}  {row}  {exact[i]:+.5f}")
    print(f"(limit is H(x) - log 2; log 2 = {math.log(2):.5f})")


if __name__ == "__main__":
    main()
