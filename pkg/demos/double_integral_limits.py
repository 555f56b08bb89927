"""Sampler tour of the double-stochastic-integral limit statistics.

The sqrt(n)-rescaled discretization error is driven by sums of iterated
stochastic integrals over consecutive Euler steps.  Three families of
statistics isolate that mechanism on a bare Brownian lattice:

  * the diagonal double integral, whose limit is centered with variance
    one half per unit of integrand mass;
  * the quadratic-variation statistic, which picks out one half of the
    integral of the product of the two integrand processes;
  * degenerate configurations whose limit is exactly zero.

Each block below draws lattices, evaluates the statistic, and compares
moments with the predicted limit.

Run:  python3 demos/double_integral_limits.py
"""

import numpy as np

from filterlab import (double_integral, get_zero_case, list_zero_cases,
                       qv_statistic, sample_lattice)

N_FINE = 2048
LEVEL = 256
DRAWS = 4000
SEED = 23


def main():
    print(f"n={LEVEL}, n_fine={N_FINE}, draws={DRAWS}\n")
    lattices = [sample_lattice(1, 1, N_FINE, SEED, p) for p in range(DRAWS)]

    theta = lambda t, b, w: np.ones_like(t)
    vals = np.array([double_integral(lat, theta, LEVEL) for lat in lattices])
    print("diagonal double integral with unit integrand")
    print(f"  mean {vals.mean():+.4f}  variance {vals.var(ddof=1):.4f}  "
          "(limit: mean 0, variance 0.5)")

    a = lambda t, w: np.cos(t)
    b = lambda t, w: np.cos(t)
    qv = np.array([qv_statistic(lat, a, b, 0, 0, LEVEL) for lat in lattices])
    target = 0.5 * (0.5 + np.sin(2.0) / 4.0)    # 0.5 * int_0^1 cos^2
    print("\nquadratic-variation statistic with a=b=cos(t)")
    print(f"  mean {qv.mean():.4f}  (limit {target:.4f}),  "
          f"stderr {qv.std(ddof=1) / np.sqrt(DRAWS):.4f}")

    print("\ndegenerate configurations (limit identically zero)")
    for name in list_zero_cases():
        case = get_zero_case(name)
        zv = np.array([case.statistic(lat, LEVEL) for lat in lattices[:1000]])
        print(f"  {name:>16}: mean {zv.mean():+.5f}, "
              f"std {zv.std(ddof=1):.5f}")


if __name__ == "__main__":
    main()
