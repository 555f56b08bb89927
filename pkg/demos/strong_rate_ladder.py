"""Estimate the strong convergence rate of the discretized filter.

The coarse-level particle estimate of the unnormalized filter differs from
the reference-level one by an error whose L2 norm should shrink like
C/sqrt(n) as the number of Euler steps n grows.  This script evaluates the
error on a ladder of levels sharing one fine Brownian lattice per path,
then fits log L2-error against log n and reports the slope with a
bootstrap confidence interval.

Run:  python3 demos/strong_rate_ladder.py
"""

import numpy as np

from filterlab import (get_model, get_test_function, rate_ladder_sample,
                       rate_regression, sample_lattice)

N_FINE = 2048
LADDER = [16, 32, 64, 128, 256]
PARTICLES = 1500
PATHS = 120
SEED = 11


def main():
    model = get_model("coupled")
    g = get_test_function("tanh")
    print(f"model: {model.name}, g=tanh, n_fine={N_FINE}, "
          f"M={PARTICLES}, paths={PATHS}")
    rows = []
    for p in range(PATHS):
        lat = sample_lattice(model.e, model.d, N_FINE, SEED, p)
        errs, _ = rate_ladder_sample(model, lat, g, LADDER, PARTICLES, 0)
        rows.append(errs)
    errors = [np.array(col) for col in zip(*rows)]

    print(f"\n{'n':>6} {'L2 error':>10} {'sqrt(n)*L2':>11}")
    for n, err in zip(LADDER, errors):
        l2 = float(np.sqrt(np.mean(err ** 2)))
        print(f"{n:>6} {l2:>10.5f} {np.sqrt(n) * l2:>11.4f}")

    fit = rate_regression(LADDER, errors, seed=SEED)
    print(f"\nfitted slope: {fit.slope:.3f}  "
          f"(bootstrap stderr {fit.slope_stderr:.3f})")
    print("a slope near -0.5 matches the C/sqrt(n) strong rate; the "
          "sqrt(n)-scaled column should level off at the constant C")


if __name__ == "__main__":
    main()
