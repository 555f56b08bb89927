"""Compare the particle filter against the Kalman-Bucy oracle.

For the linear-Gaussian model the conditional mean of the signal given the
observations solves a closed-form ODE system, so it is an exact yardstick
for the Girsanov-weighted particle estimate.  This script simulates a
handful of observation paths, runs both filters, and prints the
discrepancies next to the Monte Carlo error bars.

Run:  python3 demos/kalman_vs_particle.py
"""

import math

from filterlab import (SchemeTag, WeightScheme, get_model, get_test_function,
                       kalman_filter, normalized_estimate, sample_lattice)
from filterlab.euler import simulate_observation

N_FINE = 1024
PARTICLES = 4000
PATHS = 8
SEED = 7


def main():
    model = get_model("linear-gaussian")
    g = get_test_function("x")
    print(f"model: {model.name}, n_fine={N_FINE}, M={PARTICLES}")
    print(f"{'path':>4} {'kalman':>9} {'particle':>9} {'stderr':>8} "
          f"{'|diff|/se':>9}")
    worst = 0.0
    for p in range(PATHS):
        lat = sample_lattice(model.e, model.d, N_FINE, SEED, p)
        x_path, y_path = simulate_observation(model, lat)
        means, variances = kalman_filter(model, y_path)
        est = normalized_estimate(model, lat,
                                  WeightScheme(SchemeTag.REFERENCE),
                                  PARTICLES, 0, g, y_path=y_path)
        # fold a proxy for the shared O(1/n) discretization bias into the
        # comparison scale
        scale = math.sqrt(est.std_error ** 2 + (2.0 / N_FINE) ** 2)
        pull = abs(est.value - means[-1]) / scale
        worst = max(worst, pull)
        print(f"{p:>4} {means[-1]:>9.4f} {est.value:>9.4f} "
              f"{est.std_error:>8.4f} {pull:>9.2f}")
    print(f"\nlargest |difference| in combined-error units: {worst:.2f} "
          "(values around 1 are expected, values above 3 would be alarming)")
    print(f"terminal conditional variance from the ODE: {variances[-1]:.4f}")


if __name__ == "__main__":
    main()
